#include "clqg/stats.hpp"

#include "clqg/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace clqg {

MeanSe mean_se(std::span<const double> v) {
    MeanSe r;
    r.n = v.size();
    if (v.empty()) return r;
    // Welford
    double m = 0.0, s = 0.0;
    std::size_t k = 0;
    for (double x : v) {
        ++k;
        const double d = x - m;
        m += d / static_cast<double>(k);
        s += d * (x - m);
    }
    r.mean = m;
    if (v.size() > 1) r.se = std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    return r;
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double quantile(std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile: p must lie in [0,1]");
    std::sort(v.begin(), v.end());
    const double h = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("fit_line: need two or more paired values");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw DomainError("fit_line: abscissae are all equal");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

bool is_monotone(std::span<const double> v) {
    bool up = true, down = true;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] >= v[i - 1])) up = false;
        if (!(v[i] <= v[i - 1])) down = false;
    }
    return up || down;
}

bool strictly_decreasing(std::span<const double> v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

}  // namespace clqg
