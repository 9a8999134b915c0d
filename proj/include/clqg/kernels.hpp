#pragma once

#include "clqg/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace clqg {

enum class KernelFamily : std::uint32_t { MFF = 0, GFF_DIRICHLET = 1, FOURIER = 2 };

const char* to_string(KernelFamily f);
KernelFamily kernel_family_from_string(const std::string& s);

/// Radial Fourier profile phi(|u|). An empty table means the default
/// phi(u) = 1/(u^2 + m^2). A table is interpolated linearly in (u, u^2 phi)
/// and continued by u^2 phi = 1 beyond its last radius.
struct FourierProfile {
    double mass = 1.0;
    std::vector<double> radii;
    std::vector<double> values;
    double tail_tolerance = 0.05;

    double operator()(double u) const;
    bool tabulated() const { return !radii.empty(); }
};

struct KernelSpec {
    KernelFamily family = KernelFamily::MFF;
    double mass = 1.0;       ///< MFF mass m.
    Rect domain{};           ///< GFF Dirichlet rectangle.
    FourierProfile profile;  ///< FOURIER radial profile.

    static KernelSpec mff(double m);
    static KernelSpec gff(const Rect& domain);
    static KernelSpec fourier(double m);
    static KernelSpec fourier_tabulated(std::vector<double> radii, std::vector<double> values);

    /// Checks the type invariants; throws DomainError.
    void validate() const;

    /// Flat parameter block used by the binary cache and config hashing.
    std::vector<double> parameters() const;
    static KernelSpec from_parameters(KernelFamily family, const std::vector<double>& params);
};

/// MFF Green function int_0^inf exp(-m^2 u/2 - r^2/(2u)) du/(2u), by adaptive
/// quadrature (relative error <= 1e-8). Throws DomainError for r <= 0 or m <= 0.
double mff_green(double r, double m);

/// Star-scale kernel k_m(z) = 1/2 int_0^inf exp(-m^2|z|^2/(2v) - v/2) dv.
double star_scale_kernel(const Point& z, double m);
double star_scale_kernel(double abs_z, double m);

/// One-dimensional Dirichlet heat kernel on [0, L] for generator (1/2) d^2/dx^2,
/// by sine series truncated once the tail bound drops below 1e-10 relative.
double dirichlet_heat_kernel_1d(double t, double x, double y, double length);

/// Killed heat kernel p_D(t, x, y) of the rectangle (product of 1D kernels).
double dirichlet_heat_kernel(const Rect& domain, double t, const Point& x, const Point& y);

/// The u-kernel k(u,x,y). For MFF and FOURIER K_eps = int_1^{1/eps} k du/u;
/// for GFF K_eps = int_0^{1/eps} k dv/v with k(v) = 2 pi v^-2 p_D(v^-2).
double kernel_u(const KernelSpec& spec, double u, const Point& x, const Point& y);

/// Lower end of the u-integration range (1 for MFF/FOURIER, 0 for GFF).
double kernel_u_min(const KernelSpec& spec);

/// K_eps(x, y). Relative quadrature error <= 1e-6.
double cutoff_covariance(const KernelSpec& spec, double eps, const Point& x, const Point& y);

/// H_eps(x) = K_eps(x, x) - ln(1/eps).
double drift(const KernelSpec& spec, double eps, const Point& x);

/// Tolerances for the assumption diagnostics.
struct AssumptionTolerances {
    double negativity = 1e-12;   ///< A.1: min k >= -tol
    double lipschitz = 10.0;     ///< A.2
    double tail = 5.0;           ///< A.3
    double drift_cauchy = 1e-3;  ///< A.4: last Cauchy difference of H
    double drift_lipschitz = 10.0;
    double minorization = 10.0;  ///< A.5: smallest admissible C
    double sandwich = 3.0;       ///< near-diagonal constant c_S
    int points_per_axis = 4;
};

struct DiagnosticRow {
    std::string assumption;
    double statistic = 0.0;
    double tolerance = 0.0;
    std::string verdict;  ///< PASS, FAIL or INFO
};

/// Numerical surrogates of assumptions A.1-A.6 on a window and ladder.
std::vector<DiagnosticRow> assumption_report(const KernelSpec& spec, const Rect& window,
                                             const std::vector<double>& eps_ladder,
                                             const AssumptionTolerances& tol = {});

/// CSV with header (assumption,statistic,tolerance,verdict).
std::string diagnostics_csv(const std::vector<DiagnosticRow>& rows);

/// Near-diagonal sandwich constant: max over sampled y in the window,
/// w in B(y, eps) and ladder scales of |K_eps(y, w) - ln(1/eps)|.
double sandwich_constant(const KernelSpec& spec, const Rect& window, const std::vector<double>& eps_ladder,
                         int points_per_axis = 3);

}  // namespace clqg
