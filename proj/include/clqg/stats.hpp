#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace clqg {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;  ///< standard error of the mean (sample sd / sqrt(n))
    std::size_t n = 0;
};

MeanSe mean_se(std::span<const double> v);
double median(std::vector<double> v);
/// Linear-interpolated empirical quantile, p in [0,1].
double quantile(std::vector<double> v, double p);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Ordinary least squares y = intercept + slope x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// True if the sequence is monotone (all steps of one sign, ties allowed).
bool is_monotone(std::span<const double> v);
bool strictly_decreasing(std::span<const double> v);

}  // namespace clqg
