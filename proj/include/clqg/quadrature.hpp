#pragma once

#include <functional>

namespace clqg::quad {

/// Adaptive Gauss-Kronrod (15 point) on a finite interval.
double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol,
                 double* abs_error = nullptr);

/// Integral over [a,b] split at `peak` (clamped into the interval).
double integrate_split(const std::function<double(double)>& f, double a, double peak, double b, double rel_tol);

}  // namespace clqg::quad
