#pragma once

#include "clqg/common.hpp"
#include "clqg/kernels.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace clqg {

/// Dyadic cutoff ladder eps_j = 2^-j, j = 0..J.
struct ScaleLadder {
    std::vector<double> eps;

    static ScaleLadder dyadic(int depth);
    int depth() const { return static_cast<int>(eps.size()) - 1; }
};

/// How points outside the cell-centre hull are treated.
enum class Boundary : std::uint32_t {
    Hull = 0,           ///< interpolation only inside the hull of cell centres
    Periodic = 1,       ///< torus wrap
    OddReflection = 2,  ///< Dirichlet: ghost nodes carry the negated mirror value
};

/// Cell-centred grid: centre of cell (ix, iy) is (x0 + (ix+1/2) dx, y0 + (iy+1/2) dx).
struct GridSpec {
    Eigen::Index nx = 0, ny = 0;
    double x0 = 0.0, y0 = 0.0, dx = 1.0;
    Boundary boundary = Boundary::Hull;

    static GridSpec unit_square(Eigen::Index n);

    Point center(Eigen::Index ix, Eigen::Index iy) const {
        return {x0 + (static_cast<double>(ix) + 0.5) * dx, y0 + (static_cast<double>(iy) + 0.5) * dx};
    }
    double cell_area() const { return dx * dx; }
    Eigen::Index cells() const { return nx * ny; }
    /// Region covered by the cells.
    Rect extent() const { return {x0, y0, x0 + static_cast<double>(nx) * dx, y0 + static_cast<double>(ny) * dx}; }
    /// Region where interpolation is defined.
    Rect domain() const;
    bool operator==(const GridSpec&) const = default;
};

/// Bilinear interpolation support of a point: four nodes with weights and
/// signs (sign -1 for odd-reflected ghost nodes). Order: 00, 10, 01, 11.
struct Interp {
    std::array<Eigen::Index, 4> ix{}, iy{};
    std::array<double, 4> w{};
    std::array<double, 4> sign{};
    bool simple = true;  ///< no ghosts: stationary fast path applies
};

/// Locates p on the grid; throws DomainError outside the grid domain.
Interp locate(const GridSpec& grid, const Point& p);
/// Non-throwing variant; returns false outside the grid domain.
bool try_locate(const GridSpec& grid, const Point& p, Interp& out);

/// Covariance of one scale between nearest-neighbour nodes.
struct Stencil {
    bool stationary = true;
    // stationary: lag covariances C(0,0), C(1,0), C(0,1), C(1,1), C(1,-1)
    double c00 = 0.0, c10 = 0.0, c01 = 0.0, c11 = 0.0, c1m = 0.0;
    // nonstationary per-node tables: var; covx: (ix,iy)-(ix+1,iy); covy: (ix,iy)-(ix,iy+1);
    // covd: (ix,iy)-(ix+1,iy+1); cova: (ix+1,iy)-(ix,iy+1)
    Grid var, covx, covy, covd, cova;

    double variance(Eigen::Index ix, Eigen::Index iy) const { return stationary ? c00 : var(iy, ix); }
    /// Covariance between real nodes a and b differing by at most one index per axis.
    double cov(const GridSpec& g, Eigen::Index ax, Eigen::Index ay, Eigen::Index bx, Eigen::Index by) const;
    /// Exact variance of the interpolated value sum_a w_a s_a X_a.
    double interpolated_variance(const GridSpec& g, const Interp& it) const;
};

/// Per-scale covariance information shared by all replicas of a synthesizer.
struct CovarianceModel {
    std::vector<Stencil> scales;         ///< j = 0..J, cumulative field X_j
    std::vector<double> clip_error;      ///< per shell: max covariance error from clipping
    std::vector<int> padding;            ///< per shell: embedding padding factor used
};

/// Multiscale field samples X_j on a grid with exact variance bookkeeping.
struct FieldLadder {
    KernelSpec spec;
    GridSpec grid;
    ScaleLadder ladder;
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    std::vector<Grid> X;  ///< j = 0..J
    std::shared_ptr<const CovarianceModel> cov;

    int depth() const { return ladder.depth(); }
    double value(int j, Eigen::Index ix, Eigen::Index iy) const { return X[static_cast<std::size_t>(j)](iy, ix); }
    double variance(int j, Eigen::Index ix, Eigen::Index iy) const { return stencil(j).variance(ix, iy); }
    const Stencil& stencil(int j) const { return cov->scales[static_cast<std::size_t>(j)]; }
    /// Materialized sigma^2_j grid.
    Grid variance_grid(int j) const;
};

struct SynthesisOptions {
    int initial_padding = 2;
    int max_padding = 4;
    /// Largest covariance error tolerated from clipping negative circulant eigenvalues.
    double clip_tolerance = 0.05;
    /// Keep the whole embedding torus as a periodic grid instead of cropping to the window.
    bool periodic = false;
};

/// Precomputed synthesis plan. Construction does the spectral/eigenbasis
/// work once; sample() is thread-safe and deterministic in (seed, replica).
class FieldSynthesizer {
public:
    FieldSynthesizer(const KernelSpec& spec, const GridSpec& window, const ScaleLadder& ladder,
                     const SynthesisOptions& options = {});
    ~FieldSynthesizer();
    FieldSynthesizer(FieldSynthesizer&&) noexcept;
    FieldSynthesizer& operator=(FieldSynthesizer&&) noexcept;

    FieldLadder sample(std::uint64_t seed, std::uint64_t replica = 0) const;

    const GridSpec& grid() const;
    const ScaleLadder& ladder() const;
    const KernelSpec& spec() const;
    std::shared_ptr<const CovarianceModel> covariance() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

FieldLadder sample_field_ladder(const KernelSpec& spec, const GridSpec& grid, const ScaleLadder& ladder,
                                std::uint64_t seed, const SynthesisOptions& options = {});

/// Bilinear interpolation of X_j at p; exact at cell centres.
double field_at(const FieldLadder& field, int j, const Point& p);
/// Exact variance of the interpolated value field_at(field, j, p).
double variance_at(const FieldLadder& field, int j, const Point& p);

/// Unbiased sample covariance of X_j(x), X_j(y) over replicas.
double empirical_covariance(std::span<const FieldLadder> fields, int j, const Point& x, const Point& y);

/// A ladder with constant synthetic grids X_j = c_j and variances s_j (tests, plug-in checks).
FieldLadder constant_field(const GridSpec& grid, const ScaleLadder& ladder, const std::vector<double>& values,
                           const std::vector<double>& variances);

}  // namespace clqg
