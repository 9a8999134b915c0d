#pragma once

#include "clqg/field_synth.hpp"
#include "clqg/rng.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace clqg {

/// Discretized planar Brownian motion: B_k at t_k = k dt.
struct BrownianPath {
    Point start = Point::Zero();
    double dt = 0.0;
    std::vector<Point> B;  ///< k = 0..K
    std::uint64_t seed = 0;
    std::uint64_t index = 0;

    std::size_t steps() const { return B.empty() ? 0 : B.size() - 1; }
    double horizon() const { return dt * static_cast<double>(steps()); }
};

/// Stateful Brownian increments; extending a path continues the same stream.
class BrownianStepper {
public:
    BrownianStepper(std::uint64_t seed, std::uint64_t index, double dt);
    Point increment();
    double dt() const { return dt_; }

private:
    NormalStream normal_;
    double sd_;
    double dt_;
};

/// K = ceil(T/dt) steps from x; deterministic in (seed, index).
BrownianPath simulate_bm(const Point& x, double T, double dt, std::uint64_t seed, std::uint64_t index = 0);

/// Appends steps to a path, continuing its stream.
void extend_bm(BrownianPath& path, BrownianStepper& stepper, std::size_t steps);

enum class ClockNormalization {
    ExactVariance,  ///< weight e^{2X~ - 2 sigma~^2}
    LogCutoff,      ///< eps^2 e^{2X~}, i.e. the exact-variance weight times e^{2 H~} with H = sigma^2 - ln(1/eps)
};

struct ClockOptions {
    double beta = 15.0;
    bool escalate_beta = true;  ///< double beta while any knot violates the barrier
    int max_escalations = 16;
    ClockNormalization normalization = ClockNormalization::ExactVariance;
};

/// Cumulative clocks along a path at knots k = 0..K (left-endpoint Riemann sums).
struct ClockPath {
    int scale = 0;
    double beta = 0.0;
    double dt = 0.0;
    std::vector<double> raw;          ///< F_raw
    std::vector<double> seneta;       ///< sum of sqrt(sigma~^2) e^{2X~-2sigma~^2} dt
    std::vector<double> der;          ///< truncated F_der (nondecreasing)
    std::vector<double> der_untrunc;  ///< untruncated F_der (signed)
    std::vector<std::uint8_t> barrier;  ///< barrier indicator at each knot
    bool exited = false;              ///< path left the grid domain; arrays stop at the exit knot
    std::size_t exit_knot = 0;

    std::size_t knots() const { return raw.size(); }
    double time(std::size_t k) const { return dt * static_cast<double>(k); }
};

/// Per-point clock densities at scale j.
struct ClockDensity {
    double x = 0.0, var = 0.0;
    double raw = 0.0;          ///< e^{2X-2s} (times e^{2H} for LogCutoff)
    double seneta = 0.0;       ///< sqrt(s) * raw
    double der_untrunc = 0.0;  ///< (2s - X) * raw
    double der = 0.0;          ///< (2s - X + beta) 1{barrier} * raw
    bool barrier = true;
};

/// Evaluates clock densities of one field at one scale. Cheap to copy.
class ClockEvaluator {
public:
    ClockEvaluator(const FieldLadder& field, int scale, double beta,
                   ClockNormalization norm = ClockNormalization::ExactVariance);
    /// Returns false if p is outside the grid domain.
    bool eval(const Point& p, ClockDensity& out) const;
    /// Values X~_i and sigma~^2_i for all scales i <= scale at p.
    bool eval_ladder(const Point& p, std::vector<double>& x, std::vector<double>& var) const;
    double beta() const { return beta_; }
    int scale() const { return scale_; }
    const FieldLadder& field() const { return *field_; }

private:
    const FieldLadder* field_;
    int scale_;
    double beta_;
    ClockNormalization norm_;
    Grid drift_;  ///< H at nodes (LogCutoff only)
};

ClockPath clock_raw(const FieldLadder& field, const BrownianPath& path, int j);
ClockPath clock_derivative(const FieldLadder& field, const BrownianPath& path, int j, const ClockOptions& opt = {});
/// As clock_derivative, with every density multiplied by weight(B_k).
ClockPath clock_derivative_weighted(const FieldLadder& field, const BrownianPath& path, int j, const ClockOptions& opt,
                                    const std::function<double(const Point&)>& weight);

/// Monotone inversion of the truncated clock: s with sqrt(2/pi) F_der(s) = t.
double invert_clock(const ClockPath& clock, double t);

/// Per-replica terminal values (at the last knot) for scales 0..J.
struct ClockTerminal {
    std::vector<double> raw, seneta, der_untrunc;
};

/// Terminal clock values for every scale of one field along one path.
ClockTerminal clock_terminal_values(const FieldLadder& field, const BrownianPath& path);

struct SenetaHeydeClockReport {
    std::vector<double> median_ratio;   ///< per scale j (NaN at skipped scales and j = 0)
    std::vector<int> positive;          ///< replicas with F_der(untruncated) > 0
    std::vector<bool> skipped;
    bool monotone_last4 = false;        ///< medians over the last 4 scales form a monotone sequence
    double target = 0.0;
};

/// Median over replicas of sqrt(sigma^2) F_raw / F_der(untruncated) per scale.
SenetaHeydeClockReport seneta_heyde_clock_ratio(const std::function<FieldLadder(std::size_t)>& replica,
                                                std::size_t replicas, const BrownianPath& path, int threads = 1);

struct PathMaxReport {
    std::vector<double> per_scale;  ///< max over knots of X_j - 2 sigma_j^2 + a ln sigma_j^2; -inf at j=0
    int records_last3 = 0;          ///< new running-sup records among the last 3 scales
    bool bounded = true;            ///< records_last3 == 0
};

PathMaxReport path_max_statistic(const FieldLadder& field, const BrownianPath& path, double a);

/// CSV (k,t_k,B_x,B_y,F_raw,F_der,barrier).
void write_clock_csv(std::ostream& os, const BrownianPath& path, const ClockPath& clock);

}  // namespace clqg
