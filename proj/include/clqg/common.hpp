#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace clqg {

using Point = Eigen::Vector2d;

template <typename Scalar>
using GridArray = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Grid = GridArray<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kEulerGamma = 0.57721566490153286061;
/// sqrt(2/pi), the Seneta-Heyde constant at criticality.
inline const double kSqrt2OverPi = std::sqrt(2.0 / kPi);

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    bool contains(const Point& p) const { return p.x() >= x0 && p.x() <= x1 && p.y() >= y0 && p.y() <= y1; }
    bool interior(const Point& p) const { return p.x() > x0 && p.x() < x1 && p.y() > y0 && p.y() < y1; }
};

/// Invalid argument or point outside the admissible region.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Gaussian synthesis could not be carried out (e.g. embedding not PSD).
class SynthesisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A configured resource cap (horizon, steps, memory) was exceeded.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Clock inversion asked for a time beyond the simulated horizon.
class HorizonError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ChecksumError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace clqg
