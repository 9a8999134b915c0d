#pragma once

#include "clqg/clock.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace clqg {

/// Step-by-step Brownian walker accumulating the truncated derivative clock
/// with a fixed barrier. Suited to estimators whose horizon is random.
class ClockWalker {
public:
    ClockWalker(const ClockEvaluator& ev, const Point& x, double dt, std::uint64_t seed, std::uint64_t index);

    /// Evaluates the clock density at the current knot and moves to the next.
    /// Returns false (and does not move) when the current knot lies outside
    /// the field domain.
    bool step();

    const Point& position() const { return pos_; }
    const Point& previous() const { return prev_; }
    std::size_t knot() const { return k_; }
    double time() const { return dt_ * static_cast<double>(k_); }
    double clock() const { return F_; }           ///< F_der at the current knot
    double last_increment() const { return dF_; } ///< F_der increment of the last step
    double dt() const { return dt_; }

private:
    const ClockEvaluator* ev_;
    BrownianStepper stepper_;
    Point pos_, prev_;
    double dt_;
    std::size_t k_ = 0;
    double F_ = 0.0;
    double dF_ = 0.0;
};

struct LbmOptions {
    int scale = -1;             ///< clock scale; -1 selects the deepest
    double dt = 0.0;            ///< BM step; 0 selects dx^2/4
    double initial_horizon = 1.0;
    double horizon_cap = 1024.0;
    ClockOptions clock;
};

struct LbmTrajectory {
    Point start = Point::Zero();
    std::vector<double> t;  ///< Liouville times
    std::vector<double> s;  ///< standard times: sqrt(2/pi) F_der(s) = t
    std::vector<Point> pos; ///< B(s)
    bool exited = false;    ///< path left the field domain; t, s, pos stop at the last reachable time
    BrownianPath path;
    ClockPath clock;
};

std::vector<double> uniform_times(double T, std::size_t m);
/// m points geometrically spaced in [t0, T], preceded by 0.
std::vector<double> geometric_times(double t0, double T, std::size_t m);

/// Piecewise-linear path position at standard time s; exact at knots.
Point path_position(const BrownianPath& path, double s);

/// Time-changed Brownian motion B(<LBM>_t) at the requested Liouville times.
/// The BM horizon doubles until the clock covers max(times); beyond
/// options.horizon_cap a ResourceError is thrown.
LbmTrajectory sample_lbm(const FieldLadder& field, const Point& x, const std::vector<double>& times,
                         std::uint64_t seed, std::uint64_t index = 0, const LbmOptions& options = {});

struct ExitTime {
    double tau = 0.0;      ///< standard exit time (first knot outside D)
    double tau_hat = 0.0;  ///< sqrt(2/pi) F_der(tau)
    std::size_t knots = 0;
};

/// Exit of the LBM from the domain of a Dirichlet GFF ladder.
ExitTime exit_time_gff(const FieldLadder& field, const Point& x, std::uint64_t seed, std::uint64_t index = 0,
                       const LbmOptions& options = {});

/// Truncated clock of a GFF ladder with densities weighted by
/// (e^{gamma_E}/2) C(B, D)^2, C the conformal radius of the rectangular domain.
ClockPath conformal_radius_clock(const FieldLadder& field, const BrownianPath& path, int j,
                                 const ClockOptions& opt = {});

/// CSV (m,t_liouville,s_standard,x,y).
void write_lbm_csv(std::ostream& os, const LbmTrajectory& traj);

}  // namespace clqg
