#include "clqg/clock.hpp"

#include "clqg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace clqg {

BrownianStepper::BrownianStepper(std::uint64_t seed, std::uint64_t index, double dt)
    : normal_(seed, {tag(StreamTag::Path), index}), sd_(std::sqrt(dt)), dt_(dt) {
    if (!(dt > 0.0)) throw DomainError("Brownian step dt must be > 0");
}

Point BrownianStepper::increment() {
    const double a = normal_();
    const double b = normal_();
    return {sd_ * a, sd_ * b};
}

BrownianPath simulate_bm(const Point& x, double T, double dt, std::uint64_t seed, std::uint64_t index) {
    if (!(T > 0.0) || !(dt > 0.0)) throw DomainError("simulate_bm: T and dt must be > 0");
    const auto K = static_cast<std::size_t>(std::max(1.0, std::ceil(T / dt - 1e-9)));
    BrownianPath p;
    p.start = x;
    p.dt = dt;
    p.seed = seed;
    p.index = index;
    p.B.reserve(K + 1);
    p.B.push_back(x);
    BrownianStepper st(seed, index, dt);
    extend_bm(p, st, K);
    return p;
}

void extend_bm(BrownianPath& path, BrownianStepper& stepper, std::size_t steps) {
    path.B.reserve(path.B.size() + steps);
    for (std::size_t k = 0; k < steps; ++k) path.B.push_back(path.B.back() + stepper.increment());
}

ClockEvaluator::ClockEvaluator(const FieldLadder& field, int scale, double beta, ClockNormalization norm)
    : field_(&field), scale_(scale), beta_(beta), norm_(norm) {
    if (scale < 0 || scale > field.depth()) throw DomainError("clock: scale index out of range");
    if (norm == ClockNormalization::LogCutoff) {
        const double lneps = std::log(field.ladder.eps[static_cast<std::size_t>(scale)]);
        drift_ = field.variance_grid(scale) + lneps;
    }
}

bool ClockEvaluator::eval_ladder(const Point& p, std::vector<double>& x, std::vector<double>& var) const {
    Interp it;
    if (!try_locate(field_->grid, p, it)) return false;
    x.resize(static_cast<std::size_t>(scale_) + 1);
    var.resize(static_cast<std::size_t>(scale_) + 1);
    for (int i = 0; i <= scale_; ++i) {
        const Grid& g = field_->X[static_cast<std::size_t>(i)];
        double v = 0.0;
        for (int a = 0; a < 4; ++a) v += it.w[a] * it.sign[a] * g(it.iy[a], it.ix[a]);
        x[static_cast<std::size_t>(i)] = v;
        var[static_cast<std::size_t>(i)] = field_->stencil(i).interpolated_variance(field_->grid, it);
    }
    return true;
}

bool ClockEvaluator::eval(const Point& p, ClockDensity& d) const {
    Interp it;
    if (!try_locate(field_->grid, p, it)) return false;
    double running = -std::numeric_limits<double>::infinity();
    double xj = 0.0, sj = 0.0;
    for (int i = 0; i <= scale_; ++i) {
        const Grid& g = field_->X[static_cast<std::size_t>(i)];
        double v = 0.0;
        for (int a = 0; a < 4; ++a) v += it.w[a] * it.sign[a] * g(it.iy[a], it.ix[a]);
        const double s = field_->stencil(i).interpolated_variance(field_->grid, it);
        running = std::max(running, v - 2.0 * s);
        xj = v;
        sj = s;
    }
    double raw = std::exp(2.0 * xj - 2.0 * sj);
    if (norm_ == ClockNormalization::LogCutoff) {
        double h = 0.0;
        for (int a = 0; a < 4; ++a) h += it.w[a] * drift_(it.iy[a], it.ix[a]);
        raw *= std::exp(2.0 * h);
    }
    d.x = xj;
    d.var = sj;
    d.raw = raw;
    d.seneta = std::sqrt(sj) * raw;
    d.der_untrunc = (2.0 * sj - xj) * raw;
    d.barrier = running <= beta_;
    d.der = d.barrier ? (2.0 * sj - xj + beta_) * raw : 0.0;
    return true;
}

namespace {

struct KnotData {
    std::vector<double> raw, seneta, du, level;  // level = running max of X_i - 2 sigma_i^2 (offset by -beta)
    std::vector<double> gap;                     // 2 sigma^2 - X at scale j (times raw later)
    bool exited = false;
    std::size_t exit_knot = 0;
};

KnotData scan(const FieldLadder& field, const BrownianPath& path, int j, ClockNormalization norm,
              const std::function<double(const Point&)>* weight) {
    // beta = 0 evaluator: barrier statistic recovered from the running max stored per knot
    ClockEvaluator ev(field, j, 0.0, norm);
    KnotData kd;
    const std::size_t n = path.B.size();
    kd.raw.reserve(n);
    std::vector<double> xs, vs;
    for (std::size_t k = 0; k < n; ++k) {
        ClockDensity d;
        if (!ev.eval_ladder(path.B[k], xs, vs)) {
            kd.exited = true;
            kd.exit_knot = k;
            break;
        }
        ev.eval(path.B[k], d);
        double running = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < xs.size(); ++i) running = std::max(running, xs[i] - 2.0 * vs[i]);
        const double w = weight ? (*weight)(path.B[k]) : 1.0;
        kd.raw.push_back(w * d.raw);
        kd.seneta.push_back(w * d.seneta);
        kd.du.push_back(w * d.der_untrunc);
        kd.gap.push_back(2.0 * d.var - d.x);
        kd.level.push_back(running);
    }
    return kd;
}

ClockPath assemble(const KnotData& kd, const BrownianPath& path, int j, double beta) {
    ClockPath c;
    c.scale = j;
    c.beta = beta;
    c.dt = path.dt;
    c.exited = kd.exited;
    c.exit_knot = kd.exit_knot;
    const std::size_t evaluated = kd.raw.size();
    const std::size_t knots = kd.exited ? kd.exit_knot + 1 : evaluated;
    c.raw.assign(knots, 0.0);
    c.seneta.assign(knots, 0.0);
    c.der.assign(knots, 0.0);
    c.der_untrunc.assign(knots, 0.0);
    c.barrier.assign(knots, 0);
    const double dt = path.dt;
    for (std::size_t k = 0; k < knots; ++k) {
        if (k < evaluated) c.barrier[k] = kd.level[k] <= beta ? 1 : 0;
        if (k == 0) continue;
        const std::size_t i = k - 1;
        c.raw[k] = c.raw[i] + kd.raw[i] * dt;
        c.seneta[k] = c.seneta[i] + kd.seneta[i] * dt;
        c.der_untrunc[k] = c.der_untrunc[i] + kd.du[i] * dt;
        const double inc = kd.level[i] <= beta ? (kd.gap[i] + beta) * kd.raw[i] * dt : 0.0;
        c.der[k] = c.der[i] + inc;
    }
    return c;
}

}  // namespace

ClockPath clock_raw(const FieldLadder& field, const BrownianPath& path, int j) {
    ClockOptions opt;
    opt.escalate_beta = false;
    return clock_derivative(field, path, j, opt);
}

ClockPath clock_derivative(const FieldLadder& field, const BrownianPath& path, int j, const ClockOptions& opt) {
    return clock_derivative_weighted(field, path, j, opt, {});
}

ClockPath clock_derivative_weighted(const FieldLadder& field, const BrownianPath& path, int j, const ClockOptions& opt,
                                    const std::function<double(const Point&)>& weight) {
    if (!(opt.beta >= 0.0)) throw DomainError("clock: beta must be >= 0");
    const KnotData kd = scan(field, path, j, opt.normalization, weight ? &weight : nullptr);
    double beta = opt.beta;
    if (opt.escalate_beta && !kd.level.empty()) {
        const double need = *std::max_element(kd.level.begin(), kd.level.end());
        for (int e = 0; e < opt.max_escalations && need > beta; ++e) beta = beta > 0.0 ? 2.0 * beta : 1.0;
    }
    return assemble(kd, path, j, beta);
}

double invert_clock(const ClockPath& clock, double t) {
    if (!(t >= 0.0)) throw DomainError("invert_clock: t must be >= 0");
    const auto& F = clock.der;
    if (F.empty()) throw HorizonError("invert_clock: empty clock");
    const double a = kSqrt2OverPi;
    if (t == 0.0) return 0.0;
    if (a * F.back() < t) throw HorizonError("invert_clock: Liouville time beyond the simulated horizon; extend T");
    // first knot with a F >= t
    std::size_t lo = 0, hi = F.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (a * F[mid] >= t)
            hi = mid;
        else
            lo = mid + 1;
    }
    const std::size_t k = lo;
    if (a * F[k] == t || k == 0) return clock.time(k);
    const double f0 = a * F[k - 1], f1 = a * F[k];
    return clock.time(k - 1) + (t - f0) / (f1 - f0) * clock.dt;
}

ClockTerminal clock_terminal_values(const FieldLadder& field, const BrownianPath& path) {
    const int J = field.depth();
    ClockEvaluator ev(field, J, 0.0);
    ClockTerminal out;
    out.raw.assign(static_cast<std::size_t>(J) + 1, 0.0);
    out.seneta.assign(static_cast<std::size_t>(J) + 1, 0.0);
    out.der_untrunc.assign(static_cast<std::size_t>(J) + 1, 0.0);
    std::vector<double> xs, vs;
    const double dt = path.dt;
    for (std::size_t k = 0; k + 1 < path.B.size(); ++k) {
        if (!ev.eval_ladder(path.B[k], xs, vs)) break;
        for (std::size_t j = 0; j < xs.size(); ++j) {
            const double w = std::exp(2.0 * xs[j] - 2.0 * vs[j]);
            out.raw[j] += w * dt;
            out.seneta[j] += std::sqrt(vs[j]) * w * dt;
            out.der_untrunc[j] += (2.0 * vs[j] - xs[j]) * w * dt;
        }
    }
    return out;
}

namespace {

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<long>(m), v.end());
    const double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(m));
    return 0.5 * (lo + hi);
}

}  // namespace

SenetaHeydeClockReport seneta_heyde_clock_ratio(const std::function<FieldLadder(std::size_t)>& replica,
                                                std::size_t replicas, const BrownianPath& path, int threads) {
    if (replicas < 2) throw DomainError("seneta_heyde_clock_ratio: need at least 2 replicas");
    const auto terms =
        parallel_map(replicas, threads, [&](std::size_t r) { return clock_terminal_values(replica(r), path); });
    const std::size_t nj = terms.front().raw.size();
    SenetaHeydeClockReport rep;
    rep.target = kSqrt2OverPi;
    rep.median_ratio.assign(nj, std::numeric_limits<double>::quiet_NaN());
    rep.positive.assign(nj, 0);
    rep.skipped.assign(nj, true);
    for (std::size_t j = 1; j < nj; ++j) {
        std::vector<double> ratios;
        for (const auto& t : terms)
            if (t.der_untrunc[j] > 0.0) ratios.push_back(t.seneta[j] / t.der_untrunc[j]);
        rep.positive[j] = static_cast<int>(ratios.size());
        if (ratios.empty()) continue;
        rep.skipped[j] = false;
        rep.median_ratio[j] = median(std::move(ratios));
    }
    if (nj >= 5) {
        bool up = true, down = true;
        for (std::size_t j = nj - 3; j < nj; ++j) {
            const double a = rep.median_ratio[j - 1], b = rep.median_ratio[j];
            if (!(b >= a)) up = false;
            if (!(b <= a)) down = false;
        }
        rep.monotone_last4 = up || down;
    }
    return rep;
}

PathMaxReport path_max_statistic(const FieldLadder& field, const BrownianPath& path, double a) {
    if (!(a >= 0.0 && a < 0.25)) throw DomainError("path_max_statistic: a must lie in [0, 1/4)");
    const int J = field.depth();
    ClockEvaluator ev(field, J, 0.0);
    PathMaxReport rep;
    rep.per_scale.assign(static_cast<std::size_t>(J) + 1, -std::numeric_limits<double>::infinity());
    std::vector<double> xs, vs;
    for (const Point& p : path.B) {
        if (!ev.eval_ladder(p, xs, vs)) break;
        for (int j = 1; j <= J; ++j) {
            const double s = vs[static_cast<std::size_t>(j)];
            if (!(s > 0.0)) continue;
            const double v = xs[static_cast<std::size_t>(j)] - 2.0 * s + a * std::log(s);
            rep.per_scale[static_cast<std::size_t>(j)] = std::max(rep.per_scale[static_cast<std::size_t>(j)], v);
        }
    }
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 1; j <= J; ++j) {
        const double v = rep.per_scale[static_cast<std::size_t>(j)];
        if (j > 1 && j >= J - 2 && v > best) ++rep.records_last3;
        best = std::max(best, v);
    }
    rep.bounded = rep.records_last3 == 0;
    return rep;
}

void write_clock_csv(std::ostream& os, const BrownianPath& path, const ClockPath& c) {
    os << "k,t_k,B_x,B_y,F_raw,F_der,barrier\n" << std::setprecision(17);
    for (std::size_t k = 0; k < c.knots(); ++k)
        os << k << ',' << c.time(k) << ',' << path.B[k].x() << ',' << path.B[k].y() << ',' << c.raw[k] << ','
           << c.der[k] << ',' << static_cast<int>(c.barrier[k]) << '\n';
}

}  // namespace clqg
