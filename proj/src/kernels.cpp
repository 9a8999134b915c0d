#include "clqg/kernels.hpp"

#include "clqg/quadrature.hpp"

#include <boost/math/special_functions/bessel.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <limits>
#include <sstream>

namespace clqg {

namespace {

constexpr double kKernelTol = 1e-10;  // internal target, spec bound is 1e-8
constexpr double kCutoffTol = 1e-9;   // internal target, spec bound is 1e-6
constexpr double kExpFloor = 745.0;   // exp(-745) underflows

void require_eps(double eps) {
    if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("cutoff scale eps must lie in (0,1]");
}

}  // namespace

const char* to_string(KernelFamily f) {
    switch (f) {
        case KernelFamily::MFF: return "mff";
        case KernelFamily::GFF_DIRICHLET: return "gff";
        case KernelFamily::FOURIER: return "fourier";
    }
    return "unknown";
}

KernelFamily kernel_family_from_string(const std::string& s) {
    if (s == "mff") return KernelFamily::MFF;
    if (s == "gff") return KernelFamily::GFF_DIRICHLET;
    if (s == "fourier") return KernelFamily::FOURIER;
    throw DomainError("unknown kernel family '" + s + "' (expected mff, gff or fourier)");
}

double FourierProfile::operator()(double u) const {
    u = std::abs(u);
    if (!tabulated()) return 1.0 / (u * u + mass * mass);
    if (u >= radii.back()) return values.back() * radii.back() * radii.back() / (u * u);
    if (u <= radii.front()) return values.front();
    const auto it = std::upper_bound(radii.begin(), radii.end(), u);
    const std::size_t i = static_cast<std::size_t>(it - radii.begin()) - 1;
    const double w = (u - radii[i]) / (radii[i + 1] - radii[i]);
    const double a = radii[i] * radii[i] * values[i];
    const double b = radii[i + 1] * radii[i + 1] * values[i + 1];
    return ((1.0 - w) * a + w * b) / (u * u);
}

KernelSpec KernelSpec::mff(double m) {
    KernelSpec s;
    s.family = KernelFamily::MFF;
    s.mass = m;
    s.validate();
    return s;
}

KernelSpec KernelSpec::gff(const Rect& domain) {
    KernelSpec s;
    s.family = KernelFamily::GFF_DIRICHLET;
    s.domain = domain;
    s.validate();
    return s;
}

KernelSpec KernelSpec::fourier(double m) {
    KernelSpec s;
    s.family = KernelFamily::FOURIER;
    s.mass = m;
    s.profile.mass = m;
    s.validate();
    return s;
}

KernelSpec KernelSpec::fourier_tabulated(std::vector<double> radii, std::vector<double> values) {
    KernelSpec s;
    s.family = KernelFamily::FOURIER;
    s.profile.radii = std::move(radii);
    s.profile.values = std::move(values);
    s.validate();
    return s;
}

void KernelSpec::validate() const {
    switch (family) {
        case KernelFamily::MFF:
            if (!(mass > 0.0)) throw DomainError("MFF mass must be > 0");
            break;
        case KernelFamily::GFF_DIRICHLET:
            if (!(domain.width() > 0.0 && domain.height() > 0.0))
                throw DomainError("GFF domain must have positive area");
            break;
        case KernelFamily::FOURIER: {
            if (!profile.tabulated()) {
                if (!(profile.mass > 0.0)) throw DomainError("Fourier profile mass must be > 0");
                break;
            }
            const auto& r = profile.radii;
            const auto& v = profile.values;
            if (r.size() != v.size() || r.size() < 2) throw DomainError("Fourier profile table malformed");
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (v[i] < 0.0) throw DomainError("Fourier profile must be nonnegative");
                if (i > 0 && !(r[i] > r[i - 1])) throw DomainError("Fourier profile radii must increase");
            }
            const double tail = r.back() * r.back() * v.back();
            if (std::abs(tail - 1.0) > profile.tail_tolerance)
                throw DomainError("Fourier profile tail |u|^2 phi(u) does not approach 1");
            break;
        }
    }
}

std::vector<double> KernelSpec::parameters() const {
    switch (family) {
        case KernelFamily::MFF: return {mass};
        case KernelFamily::GFF_DIRICHLET: return {domain.x0, domain.y0, domain.x1, domain.y1};
        case KernelFamily::FOURIER: {
            std::vector<double> p{profile.mass, static_cast<double>(profile.radii.size())};
            p.insert(p.end(), profile.radii.begin(), profile.radii.end());
            p.insert(p.end(), profile.values.begin(), profile.values.end());
            return p;
        }
    }
    return {};
}

KernelSpec KernelSpec::from_parameters(KernelFamily family, const std::vector<double>& p) {
    KernelSpec s;
    s.family = family;
    switch (family) {
        case KernelFamily::MFF:
            if (p.size() != 1) throw DomainError("MFF parameter block must hold 1 value");
            s.mass = p[0];
            break;
        case KernelFamily::GFF_DIRICHLET:
            if (p.size() != 4) throw DomainError("GFF parameter block must hold 4 values");
            s.domain = Rect{p[0], p[1], p[2], p[3]};
            break;
        case KernelFamily::FOURIER: {
            if (p.size() < 2) throw DomainError("Fourier parameter block too short");
            s.profile.mass = p[0];
            s.mass = p[0];
            const auto n = static_cast<std::size_t>(p[1]);
            if (p.size() != 2 + 2 * n) throw DomainError("Fourier parameter block length mismatch");
            s.profile.radii.assign(p.begin() + 2, p.begin() + 2 + static_cast<long>(n));
            s.profile.values.assign(p.begin() + 2 + static_cast<long>(n), p.end());
            break;
        }
    }
    s.validate();
    return s;
}

double mff_green(double r, double m) {
    if (!(r > 0.0)) throw DomainError("mff_green: r must be > 0");
    if (!(m > 0.0)) throw DomainError("mff_green: m must be > 0");
    // u = e^s: integrand (1/2) exp(-m^2 e^s / 2 - r^2 e^-s / 2), peak at e^s = r/m.
    const double m2 = m * m, r2 = r * r;
    auto g = [=](double s) { return 0.5 * std::exp(-0.5 * m2 * std::exp(s) - 0.5 * r2 * std::exp(-s)); };
    const double lo = std::log(r2 / (2.0 * kExpFloor));
    const double hi = std::log(2.0 * kExpFloor / m2);
    return quad::integrate_split(g, lo, std::log(r / m), hi, kKernelTol);
}

double star_scale_kernel(double abs_z, double m) {
    const double s = m * std::abs(abs_z);
    if (s == 0.0) return 1.0;
    if (s > 700.0) return 0.0;
    return s * boost::math::cyl_bessel_k(1, s);
}

double star_scale_kernel(const Point& z, double m) { return star_scale_kernel(z.norm(), m); }

double dirichlet_heat_kernel_1d(double t, double x, double y, double length) {
    if (!(t > 0.0)) return x == y ? std::numeric_limits<double>::infinity() : 0.0;
    if (x <= 0.0 || x >= length || y <= 0.0 || y >= length) return 0.0;
    const double a = kPi * kPi * t / (2.0 * length * length);
    if (a < 0.5) {
        // short times: method of images, terms decay like exp(-2 n^2 L^2 / t)
        const double c = 1.0 / std::sqrt(2.0 * kPi * t);
        const long nmax = static_cast<long>(std::ceil(std::sqrt(30.0 * t) / length)) + 1;
        double sum = 0.0;
        for (long n = -nmax; n <= nmax; ++n) {
            const double shift = 2.0 * static_cast<double>(n) * length;
            const double d1 = x - y + shift, d2 = x + y + shift;
            sum += std::exp(-d1 * d1 / (2.0 * t)) - std::exp(-d2 * d2 / (2.0 * t));
        }
        return c * sum;
    }
    // e^{-a K^2} <= 1e-12 relative to the leading coefficient bounds the tail below 1e-10.
    const long kmax = static_cast<long>(std::ceil(std::sqrt(27.7 / a))) + 2;
    const std::complex<double> rx = std::polar(1.0, kPi * x / length);
    const std::complex<double> ry = std::polar(1.0, kPi * y / length);
    std::complex<double> zx = rx, zy = ry;
    double sum = 0.0;
    for (long k = 1; k <= kmax; ++k) {
        sum += std::exp(-a * static_cast<double>(k * k)) * zx.imag() * zy.imag();
        zx *= rx;
        zy *= ry;
    }
    return 2.0 / length * sum;
}

double dirichlet_heat_kernel(const Rect& d, double t, const Point& x, const Point& y) {
    const double px = dirichlet_heat_kernel_1d(t, x.x() - d.x0, y.x() - d.x0, d.width());
    if (px == 0.0) return 0.0;
    return px * dirichlet_heat_kernel_1d(t, x.y() - d.y0, y.y() - d.y0, d.height());
}

double kernel_u_min(const KernelSpec& spec) { return spec.family == KernelFamily::GFF_DIRICHLET ? 0.0 : 1.0; }

double kernel_u(const KernelSpec& spec, double u, const Point& x, const Point& y) {
    switch (spec.family) {
        case KernelFamily::MFF: return star_scale_kernel(u * (x - y).norm(), spec.mass);
        case KernelFamily::FOURIER: {
            const double r = (x - y).norm();
            return u * u * spec.profile(u) * boost::math::cyl_bessel_j(0, u * r);
        }
        case KernelFamily::GFF_DIRICHLET: {
            if (!(u > 0.0)) return 0.0;
            const double s = 1.0 / (u * u);
            return 2.0 * kPi * s * dirichlet_heat_kernel(spec.domain, s, x, y);
        }
    }
    return 0.0;
}

namespace {

double mff_cutoff(double m, double eps, double r) {
    if (r == 0.0) return -std::log(eps);
    if (eps == 1.0) return 0.0;
    // int_1^{1/eps} (m u r) K_1(m u r) du/u = K_0(m r) - K_0(m r / eps)
    const double a = m * r, b = a / eps;
    return boost::math::cyl_bessel_k(0, a) - (b > 700.0 ? 0.0 : boost::math::cyl_bessel_k(0, b));
}

double fourier_cutoff(const FourierProfile& phi, double eps, double r) {
    if (eps == 1.0) return 0.0;
    const double top = 1.0 / eps;
    if (r == 0.0) {
        auto g = [&](double t) {
            const double u = std::exp(t);
            return u * u * phi(u);
        };
        return quad::integrate(g, 0.0, std::log(top), kCutoffTol);
    }
    auto g = [&](double u) { return u * phi(u) * boost::math::cyl_bessel_j(0, u * r); };
    const double step = kPi / r;
    double sum = 0.0;
    for (double a = 1.0; a < top; a += step) sum += quad::integrate(g, a, std::min(a + step, top), kCutoffTol);
    return sum;
}

double gff_cutoff(const Rect& d, double eps, const Point& x, const Point& y) {
    const double w = d.width(), h = d.height();
    const double mu11 = 0.5 * kPi * kPi * (1.0 / (w * w) + 1.0 / (h * h));
    // s = e^tau; p_D decays like exp(-mu11 s) beyond the domain scale.
    const double tau_hi = std::log(40.0 / mu11);
    const double tau_lo = std::log(eps * eps);
    if (tau_lo >= tau_hi) return 0.0;
    auto g = [&](double tau) {
        const double s = std::exp(tau);
        return kPi * s * dirichlet_heat_kernel(d, s, x, y);
    };
    const double r2 = (x - y).squaredNorm();
    const double knee = std::clamp(std::log(std::max(r2, 1e-300) / 2.0), tau_lo, tau_hi);
    return quad::integrate_split(g, tau_lo, knee, tau_hi, kCutoffTol);
}

}  // namespace

double cutoff_covariance(const KernelSpec& spec, double eps, const Point& x, const Point& y) {
    require_eps(eps);
    switch (spec.family) {
        case KernelFamily::MFF: return mff_cutoff(spec.mass, eps, (x - y).norm());
        case KernelFamily::FOURIER: return fourier_cutoff(spec.profile, eps, (x - y).norm());
        case KernelFamily::GFF_DIRICHLET:
            if (!spec.domain.contains(x) || !spec.domain.contains(y))
                throw DomainError("cutoff_covariance: point outside the GFF domain");
            return gff_cutoff(spec.domain, eps, x, y);
    }
    return 0.0;
}

double drift(const KernelSpec& spec, double eps, const Point& x) {
    return cutoff_covariance(spec, eps, x, x) + std::log(eps);
}

namespace {

std::vector<Point> window_lattice(const Rect& w, int n) {
    std::vector<Point> pts;
    for (int b = 0; b < n; ++b)
        for (int a = 0; a < n; ++a)
            pts.emplace_back(w.x0 + (a + 0.5) / n * w.width(), w.y0 + (b + 0.5) / n * w.height());
    return pts;
}

bool admissible(const KernelSpec& spec, const Point& p) {
    return spec.family != KernelFamily::GFF_DIRICHLET || spec.domain.interior(p);
}

std::string verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

}  // namespace

double sandwich_constant(const KernelSpec& spec, const Rect& window, const std::vector<double>& ladder,
                         int points_per_axis) {
    double c = 0.0;
    for (const Point& y : window_lattice(window, points_per_axis)) {
        for (double eps : ladder) {
            if (eps >= 1.0) continue;
            for (double frac : {0.0, 0.5, 1.0}) {
                for (double theta : {0.0, kPi / 4.0}) {
                    const Point w = y + frac * eps * Point(std::cos(theta), std::sin(theta));
                    if (!admissible(spec, w)) continue;
                    c = std::max(c, std::abs(cutoff_covariance(spec, eps, y, w) + std::log(eps)));
                }
            }
        }
    }
    return c;
}

std::vector<DiagnosticRow> assumption_report(const KernelSpec& spec, const Rect& window,
                                             const std::vector<double>& ladder, const AssumptionTolerances& tol) {
    if (!(window.width() > 0.0 && window.height() > 0.0)) throw DomainError("assumption_report: empty window");
    for (std::size_t i = 1; i < ladder.size(); ++i)
        if (!(ladder[i] < ladder[i - 1])) throw DomainError("assumption_report: ladder must decrease");
    if (ladder.empty()) throw DomainError("assumption_report: empty ladder");

    const double eps_min = ladder.back();
    const double u_lo = std::max(kernel_u_min(spec), 0.25);
    const double u_hi = 1.0 / eps_min;
    std::vector<double> us;
    const int nu = 24;
    for (int i = 0; i < nu; ++i) us.push_back(u_lo * std::pow(u_hi / u_lo, static_cast<double>(i) / (nu - 1)));

    std::vector<double> radii;
    for (double r = 0.5 * std::min(window.width(), window.height()); r >= 0.5 * eps_min; r *= 0.25)
        radii.push_back(r);

    const auto points = window_lattice(window, tol.points_per_axis);
    double k_min = std::numeric_limits<double>::infinity();
    double lip = 0.0, tail = 0.0, minor = 0.0;
    for (const Point& x : points) {
        std::vector<double> kxx(us.size());
        for (std::size_t i = 0; i < us.size(); ++i) kxx[i] = kernel_u(spec, us[i], x, x);
        for (double r : radii) {
            for (double theta : {0.0, kPi / 3.0}) {
                const Point y = x + r * Point(std::cos(theta), std::sin(theta));
                if (!admissible(spec, y)) continue;
                for (std::size_t i = 0; i < us.size(); ++i) {
                    const double u = us[i];
                    const double kxy = kernel_u(spec, u, x, y);
                    k_min = std::min(k_min, kxy);
                    lip = std::max(lip, std::abs(kxx[i] - kxy) / (u * r));
                    if (kxx[i] > 1e-12) minor = std::max(minor, (1.0 - kxy / kxx[i]) / std::sqrt(u * r));
                }
                // A.3: int_{1/r}^inf k(u,x,y) du/u, truncated where the kernel is negligible.
                auto g = [&](double t) { return kernel_u(spec, std::exp(t), x, y); };
                const double t0 = std::log(1.0 / r), t1 = t0 + std::log(4096.0);
                double s = 0.0;
                const int pieces = spec.family == KernelFamily::FOURIER ? 256 : 16;
                for (int p = 0; p < pieces; ++p)
                    s += quad::integrate(g, t0 + (t1 - t0) * p / pieces, t0 + (t1 - t0) * (p + 1) / pieces, 1e-6);
                tail = std::max(tail, std::abs(s));
            }
        }
    }

    std::vector<DiagnosticRow> rows;
    rows.push_back({"A.1 min k(u,x,y)", k_min, -tol.negativity, verdict(k_min >= -tol.negativity)});
    rows.push_back({"A.2 lipschitz ratio", lip, tol.lipschitz, verdict(std::isfinite(lip) && lip <= tol.lipschitz)});
    rows.push_back({"A.3 tail integral sup", tail, tol.tail, verdict(std::isfinite(tail) && tail <= tol.tail)});

    // A.4: drift table along the ladder.
    std::vector<std::vector<double>> h;
    for (double eps : ladder) {
        std::vector<double> row;
        for (const Point& x : points) row.push_back(drift(spec, eps, x));
        h.push_back(std::move(row));
    }
    double cauchy = 0.0;
    if (h.size() >= 2)
        for (std::size_t i = 0; i < points.size(); ++i)
            cauchy = std::max(cauchy, std::abs(h.back()[i] - h[h.size() - 2][i]));
    double hlip = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t k = i + 1; k < points.size(); ++k)
            hlip = std::max(hlip, std::abs(h.back()[i] - h.back()[k]) / (points[i] - points[k]).norm());
    rows.push_back({"A.4 drift cauchy difference", cauchy, tol.drift_cauchy, verdict(cauchy <= tol.drift_cauchy)});
    rows.push_back({"A.4 drift lipschitz ratio", hlip, tol.drift_lipschitz, verdict(hlip <= tol.drift_lipschitz)});
    rows.push_back({"A.5 minorization constant", minor, tol.minorization,
                    verdict(std::isfinite(minor) && minor <= tol.minorization)});

    // A.6: smallest D (alpha = 1) with k(v,x,y) < 1e-12 for |x-y| >= D v^-1 (1 + 2 ln v).
    double d_needed = 0.0;
    const Point x0 = points[points.size() / 2];
    for (double v : us) {
        if (v < 1.0) continue;
        double r_supp = std::numeric_limits<double>::infinity();
        bool resolved = true;
        for (double r = 1.0 / v; r <= 4096.0 / v; r *= 1.25) {
            bool small = true;
            for (double f : {1.0, 2.0, 4.0}) {
                const Point yy = x0 + Point(f * r, 0.0);
                if (!admissible(spec, yy)) {
                    resolved = false;
                    break;
                }
                if (std::abs(kernel_u(spec, v, x0, yy)) >= 1e-12) small = false;
            }
            if (!resolved) break;
            if (small) {
                r_supp = r;
                break;
            }
        }
        if (!resolved) continue;
        d_needed = std::max(d_needed, v * r_supp / (1.0 + 2.0 * std::log(v)));
    }
    rows.push_back({"A.6 support constant D (alpha=1)", d_needed, std::numeric_limits<double>::quiet_NaN(), "INFO"});

    const double cs = sandwich_constant(spec, window, ladder, 3);
    rows.push_back({"sandwich constant c_S", cs, tol.sandwich, verdict(cs <= tol.sandwich)});
    return rows;
}

std::string diagnostics_csv(const std::vector<DiagnosticRow>& rows) {
    std::ostringstream os;
    os << "assumption,statistic,tolerance,verdict\n";
    os << std::setprecision(10);
    for (const auto& r : rows) os << r.assumption << ',' << r.statistic << ',' << r.tolerance << ',' << r.verdict << '\n';
    return os.str();
}

}  // namespace clqg
