#pragma once

#include "clqg/common.hpp"

namespace clqg {

/// ln|sin(a + i b)|, stable for large |b|.
double log_abs_sin(double a, double b);

/// Logarithm of the conformal radius of the rectangle at an interior point,
/// by the image series of the strip Green function (exponentially convergent).
double log_conformal_radius(const Rect& rect, const Point& z);
double conformal_radius(const Rect& rect, const Point& z);

/// Conformal radius of the disc B(center, radius) at z: (R^2 - |z-c|^2)/R.
double conformal_radius_disc(const Point& center, double radius, const Point& z);

/// e^{gamma_E}/2: limit of exp(2 (K_eps(x,x) - ln(1/eps) - ln C(x,D))) for the
/// heat-kernel cutoff of the Dirichlet GFF.
double conformal_clock_constant();

}  // namespace clqg
