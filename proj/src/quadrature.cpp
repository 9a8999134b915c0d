#include "clqg/quadrature.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>

namespace clqg::quad {

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol, double* abs_error) {
    if (!(b > a)) {
        if (abs_error) *abs_error = 0.0;
        return 0.0;
    }
    double err = 0.0;
    double l1 = 0.0;
    const double v =
        boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 30, rel_tol, &err, &l1);
    if (abs_error) *abs_error = err;
    return v;
}

double integrate_split(const std::function<double(double)>& f, double a, double peak, double b, double rel_tol) {
    const double p = std::clamp(peak, a, b);
    return integrate(f, a, p, rel_tol) + integrate(f, p, b, rel_tol);
}

}  // namespace clqg::quad
