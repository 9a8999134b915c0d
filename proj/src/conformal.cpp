#include "clqg/conformal.hpp"

#include <cmath>

namespace clqg {

double log_abs_sin(double a, double b) {
    // |sin(a+ib)|^2 = (cosh 2b - cos 2a)/2 = e^{2|b|}/4 (1 - 2 cos(2a) e^{-2|b|} + e^{-4|b|})
    const double e = std::exp(-2.0 * std::abs(b));
    return std::abs(b) - std::log(2.0) + 0.5 * std::log1p(-2.0 * std::cos(2.0 * a) * e + e * e);
}

double log_conformal_radius(const Rect& rect, const Point& z) {
    if (!rect.interior(z)) throw DomainError("conformal radius: point not inside the rectangle");
    const double a = rect.width(), b = rect.height();
    const double x = z.x() - rect.x0, y = z.y() - rect.y0;
    const double alpha = kPi * x / a;
    double s = std::log(2.0 * a / kPi * std::sin(alpha));
    const double rate = 2.0 * kPi * b / a;
    const int nmax = static_cast<int>(std::ceil(40.0 / rate)) + 2;
    for (int n = -nmax; n <= nmax; ++n) {
        if (n != 0) {
            const double beta = kPi * b * n / a;
            s += log_abs_sin(alpha, -beta) - log_abs_sin(0.0, beta);
        }
        const double beta2 = kPi * (y - b * n) / a;
        s -= log_abs_sin(alpha, beta2) - log_abs_sin(0.0, beta2);
    }
    return s;
}

double conformal_radius(const Rect& rect, const Point& z) { return std::exp(log_conformal_radius(rect, z)); }

double conformal_radius_disc(const Point& center, double radius, const Point& z) {
    const double d2 = (z - center).squaredNorm();
    if (!(d2 < radius * radius)) throw DomainError("conformal radius: point not inside the disc");
    return (radius * radius - d2) / radius;
}

double conformal_clock_constant() { return 0.5 * std::exp(kEulerGamma); }

}  // namespace clqg
