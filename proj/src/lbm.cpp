#include "clqg/lbm.hpp"

#include "clqg/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace clqg {

ClockWalker::ClockWalker(const ClockEvaluator& ev, const Point& x, double dt, std::uint64_t seed,
                         std::uint64_t index)
    : ev_(&ev), stepper_(seed, index, dt), pos_(x), prev_(x), dt_(dt) {}

bool ClockWalker::step() {
    ClockDensity d;
    if (!ev_->eval(pos_, d)) return false;
    dF_ = d.der * dt_;
    F_ += dF_;
    prev_ = pos_;
    pos_ += stepper_.increment();
    ++k_;
    return true;
}

std::vector<double> uniform_times(double T, std::size_t m) {
    if (!(T >= 0.0) || m == 0) throw DomainError("uniform_times: need T >= 0 and m >= 1");
    std::vector<double> t(m + 1);
    for (std::size_t i = 0; i <= m; ++i) t[i] = T * static_cast<double>(i) / static_cast<double>(m);
    return t;
}

std::vector<double> geometric_times(double t0, double T, std::size_t m) {
    if (!(t0 > 0.0 && T > t0) || m < 2) throw DomainError("geometric_times: need 0 < t0 < T and m >= 2");
    std::vector<double> t{0.0};
    const double r = std::log(T / t0) / static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i) t.push_back(t0 * std::exp(r * static_cast<double>(i)));
    t.back() = T;
    return t;
}

Point path_position(const BrownianPath& path, double s) {
    if (path.B.empty()) throw DomainError("path_position: empty path");
    const double u = s / path.dt;
    const auto k = static_cast<std::size_t>(std::floor(u));
    if (k >= path.steps()) return path.B.back();
    const double f = u - static_cast<double>(k);
    if (f == 0.0) return path.B[k];
    return (1.0 - f) * path.B[k] + f * path.B[k + 1];
}

namespace {

int resolve_scale(const FieldLadder& field, int scale) {
    const int j = scale < 0 ? field.depth() : scale;
    if (j > field.depth()) throw DomainError("scale index beyond the ladder depth");
    return j;
}

double resolve_dt(const FieldLadder& field, double dt) { return dt > 0.0 ? dt : 0.25 * field.grid.dx * field.grid.dx; }

}  // namespace

LbmTrajectory sample_lbm(const FieldLadder& field, const Point& x, const std::vector<double>& times,
                         std::uint64_t seed, std::uint64_t index, const LbmOptions& options) {
    if (times.empty()) throw DomainError("sample_lbm: no output times");
    for (std::size_t i = 0; i < times.size(); ++i)
        if (!(times[i] >= 0.0) || (i > 0 && times[i] < times[i - 1]))
            throw DomainError("sample_lbm: output times must be nonnegative and nondecreasing");
    Interp probe;
    if (!try_locate(field.grid, x, probe)) throw DomainError("sample_lbm: start point outside the field domain");

    const int j = resolve_scale(field, options.scale);
    const double dt = resolve_dt(field, options.dt);
    const double tmax = times.back();
    const double a = kSqrt2OverPi;

    LbmTrajectory tr;
    tr.start = x;
    tr.path.start = x;
    tr.path.dt = dt;
    tr.path.seed = seed;
    tr.path.index = index;
    tr.path.B.push_back(x);
    BrownianStepper stepper(seed, index, dt);
    double horizon = std::max(options.initial_horizon, dt);
    extend_bm(tr.path, stepper, static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9)));
    for (;;) {
        tr.clock = clock_derivative(field, tr.path, j, options.clock);
        if (tr.clock.exited || a * tr.clock.der.back() >= tmax) break;
        if (2.0 * tr.path.horizon() > options.horizon_cap)
            throw ResourceError("sample_lbm: Brownian horizon would exceed the cap of " +
                                std::to_string(options.horizon_cap));
        extend_bm(tr.path, stepper, tr.path.steps());
    }
    const double reach = a * tr.clock.der.back();
    for (double t : times) {
        if (t > reach) {
            tr.exited = true;
            break;
        }
        const double s = invert_clock(tr.clock, t);
        tr.t.push_back(t);
        tr.s.push_back(s);
        tr.pos.push_back(path_position(tr.path, s));
    }
    return tr;
}

ExitTime exit_time_gff(const FieldLadder& field, const Point& x, std::uint64_t seed, std::uint64_t index,
                       const LbmOptions& options) {
    if (field.spec.family != KernelFamily::GFF_DIRICHLET) throw DomainError("exit_time_gff: field is not a GFF ladder");
    const Rect d = field.spec.domain;
    const double tol = 1e-12 * std::max(d.width(), d.height());
    if (x.x() < d.x0 - tol || x.x() > d.x1 + tol || x.y() < d.y0 - tol || x.y() > d.y1 + tol)
        throw DomainError("exit_time_gff: start point outside the domain");
    const int j = resolve_scale(field, options.scale);
    const double dt = resolve_dt(field, options.dt);
    ClockEvaluator ev(field, j, options.clock.beta, options.clock.normalization);
    ClockWalker w(ev, x, dt, seed, index);
    // exit from the open domain: a knot on the boundary has already left
    while (d.interior(w.position()) && w.step()) {
        if (w.time() > options.horizon_cap) throw ResourceError("exit_time_gff: horizon cap reached before exit");
    }
    return {w.time(), kSqrt2OverPi * w.clock(), w.knot()};
}

ClockPath conformal_radius_clock(const FieldLadder& field, const BrownianPath& path, int j, const ClockOptions& opt) {
    if (field.spec.family != KernelFamily::GFF_DIRICHLET)
        throw DomainError("conformal_radius_clock: field is not a GFF ladder");
    const Rect d = field.spec.domain;
    const double kappa = conformal_clock_constant();
    ClockOptions o = opt;
    o.normalization = ClockNormalization::ExactVariance;
    return clock_derivative_weighted(field, path, j, o, [&](const Point& p) {
        if (!d.interior(p)) return 0.0;
        const double c = conformal_radius(d, p);
        return kappa * c * c;
    });
}

void write_lbm_csv(std::ostream& os, const LbmTrajectory& tr) {
    os << "m,t_liouville,s_standard,x,y\n" << std::setprecision(17);
    for (std::size_t m = 0; m < tr.t.size(); ++m)
        os << m << ',' << tr.t[m] << ',' << tr.s[m] << ',' << tr.pos[m].x() << ',' << tr.pos[m].y() << '\n';
}

}  // namespace clqg
