#pragma once

#include "clqg/lbm.hpp"
#include "clqg/measure.hpp"
#include "clqg/records.hpp"
#include "clqg/stats.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace clqg {

using ReplicaFn = std::function<FieldLadder(std::size_t)>;
using TestFunction = std::function<double(const Point&)>;

/// Sum of the masses of cells whose centres lie in A.
double mass_in(const GridMeasure& m, const Rect& A);

// ---------------------------------------------------------------- ladders

/// Replica mean of a per-scale quantity against a fixed target.
struct ScaleMeanReport {
    std::string quantity;
    std::vector<double> mean, se, median;
    std::vector<bool> within;  ///< |mean - target| <= k se (exactly equal counts when se = 0)
    double target = 0.0;
    double k_se = 3.0;
    std::size_t replicas = 0;
    bool all_within = false;
    bool median_decreasing_last4 = false;
    bool check_median_trend = false;  ///< verdict also requires the median decrease
};

/// M'_j(A) for j = 0..J over field replicas; the target is 0.
ScaleMeanReport derivative_martingale_test(const ReplicaFn& replica, std::size_t replicas, const Rect& A,
                                           int threads = 1, double k_se = 3.0);

/// Fixed-path F_raw(T) for j = 0..J over field replicas; the target is T.
ScaleMeanReport clock_martingale_test(const ReplicaFn& replica, std::size_t replicas, const BrownianPath& path,
                                      int threads = 1, double k_se = 3.0);

/// Per-scale median ratio trend toward a target constant.
struct RatioTrendReport {
    std::vector<double> median;  ///< NaN at skipped scales and j = 0
    std::vector<int> positive;
    std::vector<bool> skipped;
    double target = 0.0;
    bool monotone_last4 = false;
    double final_rel_error = 0.0;
    std::size_t replicas = 0;
};

/// Median over replicas of sqrt(sigma_j^2) M_j(A) / M'_j(A), over replicas with M'_j(A) > 0.
/// The Seneta-Heyde measure carries the variance factor cellwise.
RatioTrendReport seneta_heyde_measure_ratio(const ReplicaFn& replica, std::size_t replicas, const Rect& A,
                                            int threads = 1);

// ---------------------------------------------------------------- spectrum

struct SpectrumEstimate {
    std::vector<double> qs;
    std::vector<int> levels;            ///< block side 2^k cells
    std::vector<double> box_side;       ///< lambda_k
    std::vector<std::vector<double>> S; ///< [q][level] replica-averaged partition sums
    std::vector<double> xi, se, target;
    double box_dim = 0.0, box_dim_se = 0.0;
    std::size_t replicas = 0;
};

/// Levels used when none are given: the coarsest six, k = max(2, L-5)..L with L = log2 n
/// (the two finest coarsenings are never used).
std::vector<int> default_spectrum_levels(Eigen::Index n);

/// Streams replica measures into partition sums; annealed fit with jackknife errors.
class SpectrumAccumulator {
public:
    SpectrumAccumulator(std::vector<double> qs, std::vector<int> levels);
    /// Fixes the grid (and default levels); implied by the first add().
    void configure(const GridSpec& grid);
    /// Partition sums of one replica; thread-safe once configured.
    std::vector<double> compute_row(const GridMeasure& m) const;
    void add_row(std::vector<double> row);
    void add(const GridMeasure& m);
    SpectrumEstimate finish() const;
    std::size_t replicas() const { return per_replica_.size(); }

private:
    std::vector<double> qs_;
    std::vector<int> levels_;
    double dx_ = 0.0;
    Eigen::Index n_ = 0;
    // per replica: [q * levels + k] partition sums, then [levels] box counts
    std::vector<std::vector<double>> per_replica_;
};

SpectrumEstimate multifractal_spectrum(std::span<const GridMeasure> measures, const std::vector<double>& qs,
                                       std::vector<int> levels = {});

/// 4q - 2q^2.
double spectrum_target(double q);

// ---------------------------------------------------------------- modulus

enum class ModulusGauge {
    LogPower,    ///< (ln(1 + 1/r))^exponent
    SqrtLogExp,  ///< exp((-ln r)^(1/2 - exponent))
};

struct ModulusOptions {
    ModulusGauge gauge = ModulusGauge::LogPower;
    double exponent = 0.4;
    std::vector<double> radii;  ///< empty: L 2^-k for k = 2 .. log2(n) - 1 (L the window side)
    std::size_t points = 1000;
    std::uint64_t seed = 0;
    double slope_tolerance = 0.0;  ///< bounded when the slope of ln(profile) per halving is <= this
};

struct ModulusReport {
    std::vector<double> radii;
    std::vector<Point> points;
    std::vector<std::vector<double>> profile;  ///< [point][radius]
    std::vector<double> slopes;
    std::vector<double> median_profile;
    double bounded_fraction = 0.0;
    ModulusGauge gauge = ModulusGauge::LogPower;
    double exponent = 0.0;
};

/// Draws cells with probability proportional to mass (cell centres are returned).
std::vector<Eigen::Index> sample_cells(const GridMeasure& m, std::size_t n, std::uint64_t seed, std::uint64_t label);

ModulusReport modulus_profile(const GridMeasure& m, const ModulusOptions& options = {});

// ---------------------------------------------------------------- envelope

struct EnvelopeOptions {
    double chi = 0.1;
    std::vector<double> R{2.0, 4.0, 8.0, 16.0};
    int scales = 3;  ///< deepest scales tested
    std::size_t points = 2000;
    double coverage_target = 0.9;
    std::uint64_t seed = 0;
};

struct EnvelopeReport {
    double chi = 0.0;
    double beta = 0.0;
    std::vector<int> scales;
    std::vector<double> R;
    std::vector<double> mass_coverage;     ///< per R
    std::vector<double> uniform_coverage;  ///< per R
    int selected = -1;                     ///< smallest R index reaching the coverage target, -1 if none
    std::size_t points = 0;

    double selected_R() const { return selected < 0 ? 0.0 : R[static_cast<std::size_t>(selected)]; }
};

/// Is Y + beta inside [sqrt(s)(1+s)^-chi / R, R sqrt(s)(1+s)^chi] with Y = 2 s - X?
bool inside_envelope(double x, double s, double beta, double chi, double R);

EnvelopeReport bessel_envelope(const FieldLadder& field, const GridMeasure& truncated,
                               const EnvelopeOptions& options = {});

// ---------------------------------------------------------------- LBM-based estimators

/// Exact sampler of points with density proportional to the truncated clock
/// density d(x) of an evaluator, by rejection inside grid cells against
/// twice the largest density on a sub-grid of each cell.
class ClockDensitySampler {
public:
    explicit ClockDensitySampler(const ClockEvaluator& ev, int sub = 4);
    Point sample(CounterRng& rng) const;
    /// Integral of d over the window (sub-grid midpoint rule).
    double total() const { return total_; }
    const Rect& window() const { return window_; }
    /// Cell probabilities of a bins x bins partition of the window.
    std::vector<double> bin_probabilities(int bins) const;
    /// Proposals where d exceeded the envelope (would bias the sampler; expected 0).
    std::size_t overflow() const { return overflow_; }

private:
    const ClockEvaluator* ev_;
    Rect window_;
    Eigen::Index cx_ = 0, cy_ = 0;
    double h_ = 0.0;
    int sub_ = 4;
    std::vector<double> bound_;   // per cell: 2 max
    std::vector<double> cum_;     // cumulative envelope mass
    Grid subgrid_;                // density at sub-points (row = y)
    double total_ = 0.0;
    mutable std::atomic<std::size_t> overflow_{0};
};

/// Common path parameters for the LBM estimators.
struct WalkOptions {
    int scale = -1;
    double beta = 15.0;
    double dt = 0.0;             ///< 0: dx^2/4
    double horizon_cap = 1.0e4;  ///< standard-time cap per path
    std::uint64_t seed = 0;
    int threads = 1;
};

/// Position of the piecewise-constant LBM at Liouville time t (left knot of
/// the step during which sqrt(2/pi) F reaches t). Wrapped into the window on periodic grids.
Point lbm_position(const ClockEvaluator& ev, const Point& x, double t, double dt, std::uint64_t seed,
                   std::uint64_t index, double horizon_cap);

Point wrap_point(const GridSpec& grid, const Point& p);

struct InvarianceOptions {
    double t = 0.0;
    std::size_t N = 10000;
    int bins = 16;
    std::size_t bootstrap = 5000;
    double alpha = 1e-3;
    WalkOptions walk;
};

struct InvarianceReport {
    double t = 0.0;
    std::size_t N = 0;
    double statistic = 0.0;
    double null_quantile = 0.0;  ///< (1 - alpha) quantile of the bootstrap null
    double null_median = 0.0;
    double p_value = 0.0;
    bool inside = false;
    std::size_t overflow = 0;
};

/// Chi-square distance between the end-point histogram of N LBM
/// trajectories started from the normalized truncated clock measure and the
/// measure's coarse weights, with a bootstrap null drawn from the measure.
InvarianceReport invariance_test(const FieldLadder& field, const InvarianceOptions& options);

struct ResolventEstimate {
    std::vector<double> lambda, estimate, se;
    std::size_t N = 0;
    double mean_steps = 0.0;
};

/// R_lambda f(x) = E sum_k f(B_k) (e^{-lambda a F_k} - e^{-lambda a F_{k+1}}) / lambda,
/// a = sqrt(2/pi); one path set shared by all lambda, each path run until
/// the weight e^{-lambda_min a F} drops below weight_floor.
ResolventEstimate resolvent_estimate(const FieldLadder& field, const TestFunction& f, const Point& x,
                                     const std::vector<double>& lambdas, std::size_t N, const WalkOptions& walk,
                                     double weight_floor = 1e-8, std::uint64_t stream = 0);

struct ResolventIdentityReport {
    double lambda = 1.0, mu = 2.0;
    double R_mu = 0.0, se_mu = 0.0;
    double R_lambda = 0.0, se_lambda = 0.0;
    double nested = 0.0, se_nested = 0.0;  ///< R_lambda(R_mu f)(x)
    double residual = 0.0, se_joint = 0.0;
    bool within = false;  ///< |residual| <= 3 se_joint
};

/// Residual R_mu f - R_lambda f - (lambda - mu) R_lambda(R_mu f) at x. The
/// outer resolvent uses an exponential Liouville time U ~ Exp(lambda):
/// R_lambda g(x) = E g(LBM_U) / lambda, with g estimated by inner paths.
ResolventIdentityReport resolvent_identity(const FieldLadder& field, const TestFunction& f, const Point& x,
                                           double lambda, double mu, std::size_t N_direct, std::size_t N_outer,
                                           std::size_t N_inner, const WalkOptions& walk);

struct SymmetryReport {
    double t = 0.0;
    std::size_t N = 0;
    double pf_g = 0.0;  ///< <P_t f, g>
    double f_pg = 0.0;  ///< <f, P_t g>
    double difference = 0.0, se = 0.0;
    bool within = false;  ///< |difference| <= 3 se (or both exactly equal)
};

SymmetryReport semigroup_symmetry_test(const FieldLadder& field, const TestFunction& f, const TestFunction& g,
                                       double t, std::size_t N, const WalkOptions& walk);

// ---------------------------------------------------------------- Green function

/// Mean of ln(1/|y|) over the square of side a centred at 0.
double square_log_average(double a);

/// sqrt(2/pi) sum_c (1/pi) ln(1/|x - y_c|) f_c m_c; the cell containing x uses
/// the cell average of the kernel. Requires |sum f m| <= 1e-10 sum |f m|.
double green_apply(const GridMeasure& m, const Grid& f, const Point& x);
/// green_apply at every cell centre.
Grid green_apply_grid(const GridMeasure& m, const Grid& f);
/// f minus its m-weighted mean.
Grid recenter(const GridMeasure& m, const Grid& f);

// ---------------------------------------------------------------- records

Record to_record(const ScaleMeanReport& r, const std::string& name);
Record to_record(const RatioTrendReport& r, const std::string& name);
Record to_record(const SpectrumEstimate& s, double tolerance = 0.15);
Record to_record(const ModulusReport& r, double min_fraction = 0.9);
Record to_record(const EnvelopeReport& r);
Record to_record(const InvarianceReport& r);
Record to_record(const ResolventEstimate& r, double k_se = 3.0);
Record to_record(const ResolventIdentityReport& r);
Record to_record(const SymmetryReport& r);

}  // namespace clqg
