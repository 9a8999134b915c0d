#pragma once

#include "clqg/field_synth.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace clqg {

enum class MeasureKind : std::uint32_t { SENETA_HEYDE = 0, DERIVATIVE = 1, TRUNCATED = 2, CUSTOM = 3 };

const char* to_string(MeasureKind k);

/// Per-cell masses over a grid.
struct GridMeasure {
    MeasureKind kind = MeasureKind::CUSTOM;
    int scale = 0;
    double beta = 0.0;
    GridSpec grid;
    Grid mass;
    std::uint64_t seed = 0;     ///< provenance: field seed
    std::uint64_t replica = 0;  ///< provenance: field replica

    double total() const { return mass.sum(); }
    Eigen::Index negative_cells() const { return (mass < 0.0).count(); }
    bool nonnegative() const { return negative_cells() == 0; }
};

/// sqrt(sigma^2_j) e^{2X_j - 2 sigma^2_j} x cell area.
GridMeasure seneta_heyde_measure(const FieldLadder& field, int j);
/// (2 sigma^2_j - X_j) e^{2X_j - 2 sigma^2_j} x cell area; signed.
GridMeasure derivative_measure(const FieldLadder& field, int j);
/// (2 sigma^2_j - X_j + beta) 1{max_{i<=j} (X_i - 2 sigma^2_i) <= beta} e^{2X_j - 2 sigma^2_j} x cell area.
GridMeasure truncated_measure(const FieldLadder& field, int j, double beta);
/// Raw weight e^{2X_j - 2 sigma^2_j} x cell area (the measure without the Seneta-Heyde factor).
GridMeasure raw_measure(const FieldLadder& field, int j);
/// Barrier indicator per cell: max_{i<=j} (X_i - 2 sigma^2_i) <= beta.
GridArray<std::uint8_t> barrier_grid(const FieldLadder& field, int j, double beta);
/// Uniform (Lebesgue) masses.
GridMeasure lebesgue_measure(const GridSpec& grid);

/// Sum of masses of cells whose centres lie in the closed ball B(x, r)
/// (minimal-image distance on periodic grids).
double measure_of_ball(const GridMeasure& m, const Point& x, double r);

/// Row prefix sums for repeated ball queries.
class BallIndex {
public:
    explicit BallIndex(const GridMeasure& m);
    double operator()(const Point& x, double r) const;

private:
    GridSpec grid_;
    Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> prefix_;  // ny x (nx+1)
    double total_;
};

/// CSV with header (cell,x,y,mass); cell index is iy*nx + ix.
void write_measure_csv(std::ostream& os, const GridMeasure& m);

}  // namespace clqg
