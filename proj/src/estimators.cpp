#include "clqg/estimators.hpp"

#include "clqg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace clqg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t stream_index(std::uint64_t stream, std::uint64_t n) { return (stream << 32) + n; }

int resolve_scale(const FieldLadder& field, int scale) {
    const int j = scale < 0 ? field.depth() : scale;
    if (j > field.depth()) throw DomainError("scale index beyond the ladder depth");
    return j;
}

double resolve_dt(const FieldLadder& field, double dt) { return dt > 0.0 ? dt : 0.25 * field.grid.dx * field.grid.dx; }

ScaleMeanReport summarize(std::vector<std::vector<double>> rows, double target, double k_se) {
    ScaleMeanReport r;
    r.target = target;
    r.k_se = k_se;
    r.replicas = rows.size();
    const std::size_t nj = rows.front().size();
    r.all_within = true;
    std::vector<double> col(rows.size());
    for (std::size_t j = 0; j < nj; ++j) {
        for (std::size_t i = 0; i < rows.size(); ++i) col[i] = rows[i][j];
        const MeanSe ms = mean_se(col);
        r.mean.push_back(ms.mean);
        r.se.push_back(ms.se);
        r.median.push_back(median(col));
        const bool ok = std::abs(ms.mean - target) <= k_se * ms.se || ms.mean == target;
        r.within.push_back(ok);
        r.all_within = r.all_within && ok;
    }
    if (nj >= 4) r.median_decreasing_last4 = strictly_decreasing(std::span(r.median).last(4));
    return r;
}

}  // namespace

double mass_in(const GridMeasure& m, const Rect& A) {
    double s = 0.0;
    for (Eigen::Index iy = 0; iy < m.grid.ny; ++iy)
        for (Eigen::Index ix = 0; ix < m.grid.nx; ++ix)
            if (A.contains(m.grid.center(ix, iy))) s += m.mass(iy, ix);
    return s;
}

ScaleMeanReport derivative_martingale_test(const ReplicaFn& replica, std::size_t replicas, const Rect& A,
                                           int threads, double k_se) {
    if (replicas < 2) throw DomainError("derivative_martingale_test: need at least 2 replicas");
    auto rows = parallel_map(replicas, threads, [&](std::size_t r) {
        const FieldLadder f = replica(r);
        const double area = f.grid.cell_area();
        std::vector<double> out(static_cast<std::size_t>(f.depth()) + 1, 0.0);
        for (int j = 0; j <= f.depth(); ++j) {
            const Grid& X = f.X[static_cast<std::size_t>(j)];
            const Stencil& st = f.stencil(j);
            double s = 0.0;
            for (Eigen::Index iy = 0; iy < f.grid.ny; ++iy)
                for (Eigen::Index ix = 0; ix < f.grid.nx; ++ix) {
                    if (!A.contains(f.grid.center(ix, iy))) continue;
                    const double x = X(iy, ix), v = st.variance(ix, iy);
                    s += (2.0 * v - x) * std::exp(2.0 * x - 2.0 * v);
                }
            out[static_cast<std::size_t>(j)] = s * area;
        }
        return out;
    });
    auto rep = summarize(std::move(rows), 0.0, k_se);
    rep.quantity = "M'_j(A)";
    return rep;
}

ScaleMeanReport clock_martingale_test(const ReplicaFn& replica, std::size_t replicas, const BrownianPath& path,
                                      int threads, double k_se) {
    if (replicas < 2) throw DomainError("clock_martingale_test: need at least 2 replicas");
    auto rows = parallel_map(replicas, threads, [&](std::size_t r) {
        const FieldLadder f = replica(r);
        Interp probe;
        for (const Point& p : path.B)
            if (!try_locate(f.grid, p, probe)) throw DomainError("clock_martingale_test: path leaves the field domain");
        return clock_terminal_values(f, path).raw;
    });
    auto rep = summarize(std::move(rows), path.horizon(), k_se);
    rep.quantity = "F_raw(T)";
    rep.check_median_trend = true;
    return rep;
}

RatioTrendReport seneta_heyde_measure_ratio(const ReplicaFn& replica, std::size_t replicas, const Rect& A,
                                            int threads) {
    if (replicas < 2) throw DomainError("seneta_heyde_measure_ratio: need at least 2 replicas");
    struct Pair {
        std::vector<double> sh, der;
    };
    const auto rows = parallel_map(replicas, threads, [&](std::size_t r) {
        const FieldLadder f = replica(r);
        Pair p;
        for (int j = 0; j <= f.depth(); ++j) {
            const Grid& X = f.X[static_cast<std::size_t>(j)];
            const Stencil& st = f.stencil(j);
            double sh = 0.0, der = 0.0;
            for (Eigen::Index iy = 0; iy < f.grid.ny; ++iy)
                for (Eigen::Index ix = 0; ix < f.grid.nx; ++ix) {
                    if (!A.contains(f.grid.center(ix, iy))) continue;
                    const double x = X(iy, ix), v = st.variance(ix, iy);
                    const double w = std::exp(2.0 * x - 2.0 * v);
                    sh += std::sqrt(v) * w;
                    der += (2.0 * v - x) * w;
                }
            p.sh.push_back(sh);
            p.der.push_back(der);
        }
        return p;
    });
    const std::size_t nj = rows.front().sh.size();
    RatioTrendReport rep;
    rep.replicas = replicas;
    rep.target = kSqrt2OverPi;
    rep.median.assign(nj, kNaN);
    rep.positive.assign(nj, 0);
    rep.skipped.assign(nj, true);
    for (std::size_t j = 1; j < nj; ++j) {
        std::vector<double> ratios;
        for (const auto& p : rows)
            if (p.der[j] > 0.0) ratios.push_back(p.sh[j] / p.der[j]);
        rep.positive[j] = static_cast<int>(ratios.size());
        if (ratios.empty()) continue;
        rep.skipped[j] = false;
        rep.median[j] = median(std::move(ratios));
    }
    if (nj >= 5) rep.monotone_last4 = is_monotone(std::span(rep.median).last(4));
    rep.final_rel_error = std::abs(rep.median.back() - rep.target) / rep.target;
    return rep;
}

// ---------------------------------------------------------------- spectrum

double spectrum_target(double q) { return 4.0 * q - 2.0 * q * q; }

std::vector<int> default_spectrum_levels(Eigen::Index n) {
    int L = 0;
    while ((Eigen::Index{1} << (L + 1)) <= n) ++L;
    std::vector<int> out;
    for (int k = std::max(2, L - 5); k <= L; ++k) out.push_back(k);
    return out;
}

SpectrumAccumulator::SpectrumAccumulator(std::vector<double> qs, std::vector<int> levels)
    : qs_(std::move(qs)), levels_(std::move(levels)) {
    if (qs_.empty()) throw DomainError("spectrum: no q values");
    for (double q : qs_)
        if (!(q > 0.0 && q < 1.0)) throw DomainError("spectrum: only q in (0,1) is supported");
    std::sort(levels_.begin(), levels_.end());
    levels_.erase(std::unique(levels_.begin(), levels_.end()), levels_.end());
}

void SpectrumAccumulator::configure(const GridSpec& grid) {
    if (n_ != 0) {
        if (grid.nx != n_ || grid.ny != n_ || grid.dx != dx_) throw DomainError("spectrum: replicas must share the grid");
        return;
    }
    if (grid.nx != grid.ny) throw DomainError("spectrum: square grids only");
    n_ = grid.nx;
    dx_ = grid.dx;
    if (levels_.empty()) levels_ = default_spectrum_levels(n_);
    if (levels_.size() < 4) throw DomainError("spectrum: at least 4 coarsening levels are required");
    for (int k : levels_)
        if (k < 0 || (n_ % (Eigen::Index{1} << k)) != 0)
            throw DomainError("spectrum: grid side not divisible by 2^" + std::to_string(k));
}

std::vector<double> SpectrumAccumulator::compute_row(const GridMeasure& m) const {
    if (n_ == 0) throw DomainError("spectrum: accumulator not configured");
    if (m.grid.nx != n_ || m.grid.ny != n_ || m.grid.dx != dx_) throw DomainError("spectrum: replicas must share the grid");
    if (!m.nonnegative()) throw DomainError("spectrum: measure has negative cells");
    const std::size_t nq = qs_.size(), nl = levels_.size();
    std::vector<double> row(nq * nl + nl, 0.0);
    Grid cur = m.mass;
    int k = 0;
    for (std::size_t l = 0; l < nl; ++l) {
        while (k < levels_[l]) {
            const Eigen::Index h = cur.rows() / 2, w = cur.cols() / 2;
            Grid next(h, w);
            for (Eigen::Index i = 0; i < h; ++i)
                for (Eigen::Index jx = 0; jx < w; ++jx)
                    next(i, jx) = cur(2 * i, 2 * jx) + cur(2 * i + 1, 2 * jx) + cur(2 * i, 2 * jx + 1) +
                                  cur(2 * i + 1, 2 * jx + 1);
            cur = std::move(next);
            ++k;
        }
        for (std::size_t iq = 0; iq < nq; ++iq) row[iq * nl + l] = cur.pow(qs_[iq]).sum();
        row[nq * nl + l] = static_cast<double>((cur > 0.0).count());
    }
    return row;
}

void SpectrumAccumulator::add_row(std::vector<double> row) {
    if (row.size() != qs_.size() * levels_.size() + levels_.size()) throw DomainError("spectrum: bad row size");
    per_replica_.push_back(std::move(row));
}

void SpectrumAccumulator::add(const GridMeasure& m) {
    configure(m.grid);
    add_row(compute_row(m));
}

SpectrumEstimate SpectrumAccumulator::finish() const {
    if (per_replica_.empty()) throw DomainError("spectrum: no replicas");
    const std::size_t nq = qs_.size(), nl = levels_.size(), nr = per_replica_.size();
    const std::size_t width = nq * nl + nl;
    std::vector<double> total(width, 0.0);
    for (const auto& row : per_replica_)
        for (std::size_t c = 0; c < width; ++c) total[c] += row[c];

    SpectrumEstimate est;
    est.qs = qs_;
    est.levels = levels_;
    est.replicas = nr;
    std::vector<double> lx(nl);
    for (std::size_t l = 0; l < nl; ++l) {
        est.box_side.push_back(dx_ * static_cast<double>(Eigen::Index{1} << levels_[l]));
        lx[l] = std::log(est.box_side.back());
    }
    // slope of ln(mean S) against ln lambda, with column offset c0 and replica i left out (i = nr: none)
    auto slope = [&](std::size_t c0, std::size_t leave) {
        std::vector<double> ly(nl);
        const double cnt = static_cast<double>(leave < nr ? nr - 1 : nr);
        for (std::size_t l = 0; l < nl; ++l) {
            double s = total[c0 + l];
            if (leave < nr) s -= per_replica_[leave][c0 + l];
            ly[l] = std::log(s / cnt);
        }
        return fit_line(lx, ly).slope;
    };
    auto jackknife = [&](std::size_t c0) {
        if (nr < 2) return 0.0;
        std::vector<double> loo(nr);
        for (std::size_t i = 0; i < nr; ++i) loo[i] = slope(c0, i);
        const double m = std::accumulate(loo.begin(), loo.end(), 0.0) / static_cast<double>(nr);
        double ss = 0.0;
        for (double v : loo) ss += (v - m) * (v - m);
        return std::sqrt(ss * static_cast<double>(nr - 1) / static_cast<double>(nr));
    };
    for (std::size_t iq = 0; iq < nq; ++iq) {
        std::vector<double> S(nl);
        for (std::size_t l = 0; l < nl; ++l) S[l] = total[iq * nl + l] / static_cast<double>(nr);
        est.S.push_back(S);
        est.xi.push_back(slope(iq * nl, nr) + 2.0);
        est.se.push_back(jackknife(iq * nl));
        est.target.push_back(spectrum_target(qs_[iq]));
    }
    est.box_dim = -slope(nq * nl, nr);
    est.box_dim_se = jackknife(nq * nl);
    return est;
}

SpectrumEstimate multifractal_spectrum(std::span<const GridMeasure> measures, const std::vector<double>& qs,
                                       std::vector<int> levels) {
    SpectrumAccumulator acc(qs, std::move(levels));
    for (const auto& m : measures) acc.add(m);
    return acc.finish();
}

// ---------------------------------------------------------------- modulus

std::vector<Eigen::Index> sample_cells(const GridMeasure& m, std::size_t n, std::uint64_t seed, std::uint64_t label) {
    std::vector<double> cum(static_cast<std::size_t>(m.grid.cells()));
    double s = 0.0;
    const double* p = m.mass.data();
    for (std::size_t i = 0; i < cum.size(); ++i) cum[i] = s += std::max(p[i], 0.0);
    if (!(s > 0.0)) throw DomainError("sampling from an empty measure");
    CounterRng rng(seed, {tag(StreamTag::Sampling), label});
    std::vector<Eigen::Index> out(n);
    for (auto& c : out) {
        const double u = rng.uniform() * s;
        auto it = std::upper_bound(cum.begin(), cum.end(), u);
        if (it == cum.end()) --it;
        c = static_cast<Eigen::Index>(it - cum.begin());
    }
    return out;
}

ModulusReport modulus_profile(const GridMeasure& m, const ModulusOptions& o) {
    if (!m.nonnegative()) throw DomainError("modulus_profile: measure has negative cells");
    ModulusReport rep;
    rep.gauge = o.gauge;
    rep.exponent = o.exponent;
    rep.radii = o.radii;
    if (rep.radii.empty()) {
        const double L = m.grid.extent().width();
        int n2 = 0;
        while ((Eigen::Index{1} << (n2 + 1)) <= m.grid.nx) ++n2;
        for (int k = 2; k <= n2 - 1; ++k) rep.radii.push_back(L * std::ldexp(1.0, -k));
    }
    if (rep.radii.size() < 3) throw DomainError("modulus_profile: need at least 3 radii");
    std::sort(rep.radii.begin(), rep.radii.end(), std::greater<>());
    for (double r : rep.radii)
        if (!(r > 0.0 && r < 1.0)) throw DomainError("modulus_profile: radii must lie in (0,1)");

    auto gauge = [&](double r) {
        if (o.gauge == ModulusGauge::LogPower) return std::pow(std::log1p(1.0 / r), o.exponent);
        return std::exp(std::pow(-std::log(r), 0.5 - o.exponent));
    };
    std::vector<double> lx(rep.radii.size());
    for (std::size_t i = 0; i < rep.radii.size(); ++i) lx[i] = -std::log2(rep.radii[i]);

    const BallIndex ball(m);
    const auto cells = sample_cells(m, o.points, o.seed, 1);
    std::size_t bounded = 0;
    for (Eigen::Index c : cells) {
        const Point x = m.grid.center(c % m.grid.nx, c / m.grid.nx);
        std::vector<double> prof, ly;
        for (double r : rep.radii) {
            prof.push_back(ball(x, r) * gauge(r));
            ly.push_back(std::log(prof.back()));
        }
        const double s = fit_line(lx, ly).slope;
        rep.points.push_back(x);
        rep.profile.push_back(std::move(prof));
        rep.slopes.push_back(s);
        if (s <= o.slope_tolerance) ++bounded;
    }
    rep.bounded_fraction = static_cast<double>(bounded) / static_cast<double>(cells.size());
    for (std::size_t i = 0; i < rep.radii.size(); ++i) {
        std::vector<double> col;
        for (const auto& p : rep.profile) col.push_back(p[i]);
        rep.median_profile.push_back(median(std::move(col)));
    }
    return rep;
}

// ---------------------------------------------------------------- envelope

bool inside_envelope(double x, double s, double beta, double chi, double R) {
    const double y = 2.0 * s - x + beta;
    const double rs = std::sqrt(s);
    return y >= rs * std::pow(1.0 + s, -chi) / R && y <= R * rs * std::pow(1.0 + s, chi);
}

EnvelopeReport bessel_envelope(const FieldLadder& field, const GridMeasure& m, const EnvelopeOptions& o) {
    if (!(o.chi > 0.0 && o.chi < 0.5)) throw DomainError("bessel_envelope: chi must lie in (0, 1/2)");
    if (m.kind != MeasureKind::TRUNCATED) throw DomainError("bessel_envelope: a truncated measure is required");
    if (!(m.grid == field.grid)) throw DomainError("bessel_envelope: measure and field grids differ");
    if (!(m.total() > 0.0)) throw DomainError("bessel_envelope: empty measure");
    if (o.scales < 1 || o.scales > field.depth()) throw DomainError("bessel_envelope: bad number of scales");
    if (o.R.empty()) throw DomainError("bessel_envelope: no envelope constants");

    EnvelopeReport rep;
    rep.chi = o.chi;
    rep.beta = m.beta;
    rep.R = o.R;
    rep.points = o.points;
    for (int j = field.depth() - o.scales + 1; j <= field.depth(); ++j) rep.scales.push_back(j);

    auto covered = [&](Eigen::Index c, double R) {
        const Eigen::Index ix = c % field.grid.nx, iy = c / field.grid.nx;
        for (int j : rep.scales)
            if (!inside_envelope(field.value(j, ix, iy), field.variance(j, ix, iy), m.beta, o.chi, R)) return false;
        return true;
    };
    const auto weighted = sample_cells(m, o.points, o.seed, 2);
    std::vector<Eigen::Index> uniform(o.points);
    CounterRng rng(o.seed, {tag(StreamTag::Sampling), 3});
    const auto cells = static_cast<std::uint64_t>(field.grid.cells());
    for (auto& c : uniform) c = static_cast<Eigen::Index>(std::min<std::uint64_t>(
                                 static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(cells)), cells - 1));
    for (double R : rep.R) {
        std::size_t a = 0, b = 0;
        for (Eigen::Index c : weighted) a += covered(c, R) ? 1 : 0;
        for (Eigen::Index c : uniform) b += covered(c, R) ? 1 : 0;
        rep.mass_coverage.push_back(static_cast<double>(a) / static_cast<double>(o.points));
        rep.uniform_coverage.push_back(static_cast<double>(b) / static_cast<double>(o.points));
    }
    for (std::size_t i = 0; i < rep.R.size(); ++i)
        if (rep.mass_coverage[i] >= o.coverage_target) {
            rep.selected = static_cast<int>(i);
            break;
        }
    return rep;
}

// ---------------------------------------------------------------- sampler

ClockDensitySampler::ClockDensitySampler(const ClockEvaluator& ev, int sub) : ev_(&ev), sub_(sub) {
    if (sub < 1) throw DomainError("ClockDensitySampler: sub-grid factor must be >= 1");
    const GridSpec& g = ev.field().grid;
    window_ = g.domain();
    h_ = g.dx;
    cx_ = static_cast<Eigen::Index>(std::llround(window_.width() / h_));
    cy_ = static_cast<Eigen::Index>(std::llround(window_.height() / h_));
    if (cx_ < 1 || cy_ < 1) throw DomainError("ClockDensitySampler: window smaller than one cell");
    const double hs = h_ / sub;
    subgrid_.resize(cy_ * sub, cx_ * sub);
    ClockDensity d;
    for (Eigen::Index r = 0; r < subgrid_.rows(); ++r)
        for (Eigen::Index c = 0; c < subgrid_.cols(); ++c) {
            const Point p{window_.x0 + (static_cast<double>(c) + 0.5) * hs,
                          window_.y0 + (static_cast<double>(r) + 0.5) * hs};
            subgrid_(r, c) = ev.eval(p, d) ? d.der : 0.0;
        }
    total_ = subgrid_.sum() * hs * hs;
    bound_.resize(static_cast<std::size_t>(cx_ * cy_));
    cum_.resize(bound_.size());
    double s = 0.0;
    for (Eigen::Index iy = 0; iy < cy_; ++iy)
        for (Eigen::Index ix = 0; ix < cx_; ++ix) {
            const std::size_t c = static_cast<std::size_t>(iy * cx_ + ix);
            bound_[c] = 2.0 * subgrid_.block(iy * sub, ix * sub, sub, sub).maxCoeff();
            cum_[c] = s += bound_[c] * h_ * h_;
        }
    if (!(s > 0.0)) throw DomainError("ClockDensitySampler: clock density vanishes on the window");
}

Point ClockDensitySampler::sample(CounterRng& rng) const {
    ClockDensity d;
    for (;;) {
        auto it = std::upper_bound(cum_.begin(), cum_.end(), rng.uniform() * cum_.back());
        if (it == cum_.end()) --it;
        const auto c = static_cast<Eigen::Index>(it - cum_.begin());
        const Eigen::Index ix = c % cx_, iy = c / cx_;
        const Point p{window_.x0 + (static_cast<double>(ix) + rng.uniform()) * h_,
                      window_.y0 + (static_cast<double>(iy) + rng.uniform()) * h_};
        const double b = bound_[static_cast<std::size_t>(c)];
        const double v = ev_->eval(p, d) ? d.der : 0.0;
        if (v > b) ++overflow_;
        if (rng.uniform() * b < v) return p;
    }
}

std::vector<double> ClockDensitySampler::bin_probabilities(int bins) const {
    if (bins < 1) throw DomainError("bin_probabilities: bins must be >= 1");
    std::vector<double> p(static_cast<std::size_t>(bins * bins), 0.0);
    const double hs = h_ / sub_;
    for (Eigen::Index r = 0; r < subgrid_.rows(); ++r)
        for (Eigen::Index c = 0; c < subgrid_.cols(); ++c) {
            const double x = (static_cast<double>(c) + 0.5) * hs / window_.width();
            const double y = (static_cast<double>(r) + 0.5) * hs / window_.height();
            const int bx = std::min(bins - 1, static_cast<int>(x * bins));
            const int by = std::min(bins - 1, static_cast<int>(y * bins));
            p[static_cast<std::size_t>(by * bins + bx)] += subgrid_(r, c);
        }
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= s;
    return p;
}

// ---------------------------------------------------------------- LBM estimators

Point wrap_point(const GridSpec& g, const Point& p) {
    if (g.boundary != Boundary::Periodic) return p;
    const Rect e = g.extent();
    Point q = p;
    q.x() = e.x0 + std::fmod(p.x() - e.x0, e.width());
    if (q.x() < e.x0) q.x() += e.width();
    q.y() = e.y0 + std::fmod(p.y() - e.y0, e.height());
    if (q.y() < e.y0) q.y() += e.height();
    if (q.x() >= e.x1) q.x() = e.x0;
    if (q.y() >= e.y1) q.y() = e.y0;
    return q;
}

Point lbm_position(const ClockEvaluator& ev, const Point& x, double t, double dt, std::uint64_t seed,
                   std::uint64_t index, double horizon_cap) {
    const GridSpec& g = ev.field().grid;
    if (t <= 0.0) return wrap_point(g, x);
    const double target = t / kSqrt2OverPi;
    ClockWalker w(ev, x, dt, seed, index);
    for (;;) {
        const Point cur = w.position();
        if (!w.step()) throw HorizonError("LBM path left the field domain before the requested Liouville time");
        if (w.clock() > target) return wrap_point(g, cur);
        if (w.time() > horizon_cap) throw ResourceError("LBM path reached the standard-time cap");
    }
}

namespace {

std::vector<std::size_t> histogram(const std::vector<Point>& pts, const Rect& win, int bins) {
    std::vector<std::size_t> h(static_cast<std::size_t>(bins * bins), 0);
    for (const Point& p : pts) {
        const int bx = std::clamp(static_cast<int>((p.x() - win.x0) / win.width() * bins), 0, bins - 1);
        const int by = std::clamp(static_cast<int>((p.y() - win.y0) / win.height() * bins), 0, bins - 1);
        ++h[static_cast<std::size_t>(by * bins + bx)];
    }
    return h;
}

double chi_square(const std::vector<std::size_t>& counts, const std::vector<double>& p, std::size_t N) {
    double s = 0.0;
    const double n = static_cast<double>(N);
    for (std::size_t b = 0; b < p.size(); ++b) {
        if (p[b] <= 0.0) continue;
        const double e = n * p[b];
        const double d = static_cast<double>(counts[b]) - e;
        s += d * d / e;
    }
    return s;
}

}  // namespace

InvarianceReport invariance_test(const FieldLadder& field, const InvarianceOptions& o) {
    if (!(o.t >= 0.0)) throw DomainError("invariance_test: t must be >= 0");
    if (o.N < 1 || o.bootstrap < 10) throw DomainError("invariance_test: N >= 1 and bootstrap >= 10 required");
    if (field.grid.boundary != Boundary::Periodic)
        throw DomainError("invariance_test: a periodic field is required (trajectories must stay on the torus)");
    const int j = resolve_scale(field, o.walk.scale);
    const double dt = resolve_dt(field, o.walk.dt);
    const ClockEvaluator ev(field, j, o.walk.beta);
    const ClockDensitySampler sampler(ev);
    const auto p = sampler.bin_probabilities(o.bins);
    const std::uint64_t seed = o.walk.seed;

    const auto ends = parallel_map(o.N, o.walk.threads, [&](std::size_t n) {
        CounterRng rng(seed, {tag(StreamTag::StartPoint), n});
        const Point x = sampler.sample(rng);
        return lbm_position(ev, x, o.t, dt, seed, stream_index(1, n), o.walk.horizon_cap);
    });
    InvarianceReport rep;
    rep.t = o.t;
    rep.N = o.N;
    rep.statistic = chi_square(histogram(ends, sampler.window(), o.bins), p, o.N);

    const auto null = parallel_map(o.bootstrap, o.walk.threads, [&](std::size_t b) {
        CounterRng rng(seed, {tag(StreamTag::Bootstrap), b});
        std::vector<Point> pts(o.N);
        for (auto& q : pts) q = sampler.sample(rng);
        return chi_square(histogram(pts, sampler.window(), o.bins), p, o.N);
    });
    rep.null_quantile = quantile(null, 1.0 - o.alpha);
    rep.null_median = median(null);
    const auto exceed = std::count_if(null.begin(), null.end(), [&](double v) { return v >= rep.statistic; });
    rep.p_value = (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(null.size()));
    rep.inside = rep.statistic <= rep.null_quantile;
    rep.overflow = sampler.overflow();
    return rep;
}

ResolventEstimate resolvent_estimate(const FieldLadder& field, const TestFunction& f, const Point& x,
                                     const std::vector<double>& lambdas, std::size_t N, const WalkOptions& walk,
                                     double weight_floor, std::uint64_t stream) {
    if (lambdas.empty()) throw DomainError("resolvent_estimate: no rates");
    for (double l : lambdas)
        if (!(l > 0.0)) throw DomainError("resolvent_estimate: rates must be > 0");
    if (N < 2) throw DomainError("resolvent_estimate: need at least 2 paths");
    if (!(weight_floor > 0.0 && weight_floor < 1.0)) throw DomainError("resolvent_estimate: bad weight floor");
    const int j = resolve_scale(field, walk.scale);
    const double dt = resolve_dt(field, walk.dt);
    const ClockEvaluator ev(field, j, walk.beta);
    const double lmin = *std::min_element(lambdas.begin(), lambdas.end());
    const double stop = -std::log(weight_floor) / (lmin * kSqrt2OverPi);  // in F units
    const std::size_t nl = lambdas.size();

    struct PathResult {
        std::vector<double> v;
        std::size_t steps = 0;
    };
    const auto res = parallel_map(N, walk.threads, [&](std::size_t n) {
        ClockWalker w(ev, x, dt, walk.seed, stream_index(stream, n));
        PathResult r;
        r.v.assign(nl, 0.0);
        std::vector<double> prev(nl, 1.0);
        while (w.clock() <= stop) {
            const double fx = f(wrap_point(field.grid, w.position()));
            if (!w.step()) throw HorizonError("resolvent_estimate: path left the field domain");
            if (w.last_increment() > 0.0) {
                for (std::size_t i = 0; i < nl; ++i) {
                    const double e = std::exp(-lambdas[i] * kSqrt2OverPi * w.clock());
                    r.v[i] += fx * (prev[i] - e) / lambdas[i];
                    prev[i] = e;
                }
            }
            if (w.time() > walk.horizon_cap) throw ResourceError("resolvent_estimate: standard-time cap reached");
        }
        r.steps = w.knot();
        return r;
    });
    ResolventEstimate est;
    est.lambda = lambdas;
    est.N = N;
    std::vector<double> col(N);
    for (std::size_t i = 0; i < nl; ++i) {
        for (std::size_t n = 0; n < N; ++n) col[n] = res[n].v[i];
        const MeanSe ms = mean_se(col);
        est.estimate.push_back(ms.mean);
        est.se.push_back(ms.se);
    }
    double steps = 0.0;
    for (const auto& r : res) steps += static_cast<double>(r.steps);
    est.mean_steps = steps / static_cast<double>(N);
    return est;
}

ResolventIdentityReport resolvent_identity(const FieldLadder& field, const TestFunction& f, const Point& x,
                                           double lambda, double mu, std::size_t N_direct, std::size_t N_outer,
                                           std::size_t N_inner, const WalkOptions& walk) {
    if (!(lambda > 0.0 && mu > 0.0)) throw DomainError("resolvent_identity: rates must be > 0");
    if (N_outer < 2 || N_inner < 1) throw DomainError("resolvent_identity: need N_outer >= 2, N_inner >= 1");
    ResolventIdentityReport rep;
    rep.lambda = lambda;
    rep.mu = mu;
    const auto dm = resolvent_estimate(field, f, x, {mu}, N_direct, walk, 1e-8, 1);
    const auto dl = resolvent_estimate(field, f, x, {lambda}, N_direct, walk, 1e-8, 2);
    rep.R_mu = dm.estimate[0];
    rep.se_mu = dm.se[0];
    rep.R_lambda = dl.estimate[0];
    rep.se_lambda = dl.se[0];

    const int j = resolve_scale(field, walk.scale);
    const double dt = resolve_dt(field, walk.dt);
    const ClockEvaluator ev(field, j, walk.beta);
    WalkOptions inner = walk;
    inner.threads = 1;
    const auto z = parallel_map(N_outer, walk.threads, [&](std::size_t o) {
        CounterRng rng(walk.seed, {tag(StreamTag::Exponential), o});
        const double U = -std::log1p(-rng.uniform()) / lambda;
        const Point y = lbm_position(ev, x, U, dt, walk.seed, stream_index(3, o), walk.horizon_cap);
        const auto g = resolvent_estimate(field, f, y, {mu}, std::max<std::size_t>(N_inner, 2), inner, 1e-8,
                                          (std::uint64_t{1} << 20) + o);
        return g.estimate[0] / lambda;
    });
    const MeanSe nz = mean_se(z);
    rep.nested = nz.mean;
    rep.se_nested = nz.se;
    rep.residual = rep.R_mu - rep.R_lambda - (lambda - mu) * rep.nested;
    rep.se_joint = std::sqrt(rep.se_mu * rep.se_mu + rep.se_lambda * rep.se_lambda +
                             (lambda - mu) * (lambda - mu) * rep.se_nested * rep.se_nested);
    rep.within = std::abs(rep.residual) <= 3.0 * rep.se_joint;
    return rep;
}

SymmetryReport semigroup_symmetry_test(const FieldLadder& field, const TestFunction& f, const TestFunction& g,
                                       double t, std::size_t N, const WalkOptions& walk) {
    if (!(t >= 0.0)) throw DomainError("semigroup_symmetry_test: t must be >= 0");
    if (N < 2) throw DomainError("semigroup_symmetry_test: need at least 2 trajectories");
    const int j = resolve_scale(field, walk.scale);
    const double dt = resolve_dt(field, walk.dt);
    const ClockEvaluator ev(field, j, walk.beta);
    const ClockDensitySampler sampler(ev);
    struct Pair {
        double a, b;
    };
    const auto pairs = parallel_map(N, walk.threads, [&](std::size_t n) {
        CounterRng rng(walk.seed, {tag(StreamTag::StartPoint), n});
        const Point x = sampler.sample(rng);
        const Point y = lbm_position(ev, x, t, dt, walk.seed, stream_index(5, n), walk.horizon_cap);
        const Point xw = wrap_point(field.grid, x);
        return Pair{g(xw) * f(y), f(xw) * g(y)};
    });
    std::vector<double> a(N), b(N), d(N);
    for (std::size_t n = 0; n < N; ++n) {
        a[n] = pairs[n].a;
        b[n] = pairs[n].b;
        d[n] = pairs[n].a - pairs[n].b;
    }
    const double Z = sampler.total();
    SymmetryReport rep;
    rep.t = t;
    rep.N = N;
    rep.pf_g = Z * mean_se(a).mean;
    rep.f_pg = Z * mean_se(b).mean;
    const MeanSe md = mean_se(d);
    rep.difference = Z * md.mean;
    rep.se = Z * md.se;
    rep.within = std::abs(rep.difference) <= 3.0 * rep.se || rep.difference == 0.0;
    return rep;
}

// ---------------------------------------------------------------- Green function

double square_log_average(double a) {
    if (!(a > 0.0)) throw DomainError("square_log_average: side must be > 0");
    const double h = 0.5 * a;
    return -0.5 * (std::log(2.0 * h * h) - 3.0 + 0.5 * kPi);
}

namespace {

void check_mean_zero(const GridMeasure& m, const Grid& f) {
    if (f.rows() != m.mass.rows() || f.cols() != m.mass.cols()) throw DomainError("green: f and measure differ in shape");
    const double s = (f * m.mass).sum();
    const double scale = (f * m.mass).abs().sum();
    if (std::abs(s) > 1e-10 * scale) throw DomainError("green: f is not mean-zero against the measure; recenter it");
}

}  // namespace

double green_apply(const GridMeasure& m, const Grid& f, const Point& x) {
    check_mean_zero(m, f);
    const GridSpec& g = m.grid;
    const double self = square_log_average(g.dx);
    double s = 0.0;
    for (Eigen::Index iy = 0; iy < g.ny; ++iy)
        for (Eigen::Index ix = 0; ix < g.nx; ++ix) {
            const double fm = f(iy, ix) * m.mass(iy, ix);
            if (fm == 0.0) continue;
            const Point c = g.center(ix, iy);
            const double ddx = std::abs(x.x() - c.x()), ddy = std::abs(x.y() - c.y());
            const double k = (ddx <= 0.5 * g.dx && ddy <= 0.5 * g.dx) ? self : -0.5 * std::log(ddx * ddx + ddy * ddy);
            s += k * fm;
        }
    return kSqrt2OverPi / kPi * s;
}

Grid green_apply_grid(const GridMeasure& m, const Grid& f) {
    check_mean_zero(m, f);
    const GridSpec& g = m.grid;
    const Eigen::Index nx = g.nx, ny = g.ny;
    Grid kern(2 * ny - 1, 2 * nx - 1);
    for (Eigen::Index dy = -(ny - 1); dy <= ny - 1; ++dy)
        for (Eigen::Index dx = -(nx - 1); dx <= nx - 1; ++dx) {
            const double r2 = static_cast<double>(dx * dx + dy * dy) * g.dx * g.dx;
            kern(dy + ny - 1, dx + nx - 1) = (dx == 0 && dy == 0) ? square_log_average(g.dx) : -0.5 * std::log(r2);
        }
    const Grid fm = f * m.mass;
    Grid out(ny, nx);
    for (Eigen::Index ty = 0; ty < ny; ++ty)
        for (Eigen::Index tx = 0; tx < nx; ++tx) {
            double s = 0.0;
            for (Eigen::Index iy = 0; iy < ny; ++iy)
                s += (fm.row(iy) * kern.row(iy - ty + ny - 1).segment(nx - 1 - tx, nx)).sum();
            out(ty, tx) = kSqrt2OverPi / kPi * s;
        }
    return out;
}

Grid recenter(const GridMeasure& m, const Grid& f) {
    const double tot = m.mass.sum();
    if (tot == 0.0) throw DomainError("recenter: measure has zero total mass");
    return f - (f * m.mass).sum() / tot;
}

// ---------------------------------------------------------------- records

namespace {

Json vec(const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(x);
    return a;
}

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

}  // namespace

Record to_record(const ScaleMeanReport& r, const std::string& name) {
    Record rec;
    rec.name = name;
    rec.inputs = {{"quantity", r.quantity}, {"replicas", r.replicas}, {"k_se", r.k_se}};
    rec.estimate = vec(r.mean);
    rec.se = vec(r.se);
    rec.target = r.target;
    rec.verdict = verdict(r.all_within && (!r.check_median_trend || r.median_decreasing_last4));
    rec.detail = {{"median", vec(r.median)}, {"median_decreasing_last4", r.median_decreasing_last4}};
    return rec;
}

Record to_record(const RatioTrendReport& r, const std::string& name) {
    Record rec;
    rec.name = name;
    rec.inputs = {{"replicas", r.replicas}};
    rec.estimate = vec(r.median);
    rec.target = r.target;
    rec.verdict = verdict(r.monotone_last4 && r.final_rel_error <= 0.2);
    Json pos = Json::array();
    for (int p : r.positive) pos.push_back(p);
    rec.detail = {{"positive", pos}, {"monotone_last4", r.monotone_last4}, {"final_rel_error", r.final_rel_error}};
    return rec;
}

Record to_record(const SpectrumEstimate& s, double tolerance) {
    Record rec;
    rec.name = "spectrum";
    Json lv = Json::array();
    for (int k : s.levels) lv.push_back(k);
    rec.inputs = {{"q", vec(s.qs)}, {"levels", lv}, {"replicas", s.replicas}, {"tolerance", tolerance}};
    rec.estimate = vec(s.xi);
    rec.se = vec(s.se);
    rec.target = vec(s.target);
    bool ok = true;
    for (std::size_t i = 0; i < s.xi.size(); ++i) ok = ok && std::abs(s.xi[i] - s.target[i]) <= tolerance;
    rec.verdict = verdict(ok);
    rec.detail = {{"box_side", vec(s.box_side)}, {"box_dim", s.box_dim}, {"box_dim_se", s.box_dim_se}};
    return rec;
}

Record to_record(const ModulusReport& r, double min_fraction) {
    Record rec;
    rec.name = "modulus";
    rec.inputs = {{"gauge", r.gauge == ModulusGauge::LogPower ? "log_power" : "sqrt_log_exp"},
                  {"exponent", r.exponent},
                  {"points", r.points.size()},
                  {"radii", vec(r.radii)}};
    rec.estimate = r.bounded_fraction;
    rec.target = min_fraction;
    rec.verdict = verdict(r.bounded_fraction >= min_fraction);
    rec.detail = {{"median_profile", vec(r.median_profile)}};
    return rec;
}

Record to_record(const EnvelopeReport& r) {
    Record rec;
    rec.name = "envelope";
    Json sc = Json::array();
    for (int j : r.scales) sc.push_back(j);
    rec.inputs = {{"chi", r.chi}, {"beta", r.beta}, {"R", vec(r.R)}, {"scales", sc}, {"points", r.points}};
    const bool sel = r.selected >= 0;
    const auto i = static_cast<std::size_t>(std::max(r.selected, 0));
    rec.estimate = sel ? Json(r.mass_coverage[i]) : Json();
    rec.target = 0.9;
    rec.verdict = verdict(sel && r.mass_coverage[i] > r.uniform_coverage[i]);
    rec.detail = {{"selected_R", r.selected_R()},
                  {"mass_coverage", vec(r.mass_coverage)},
                  {"uniform_coverage", vec(r.uniform_coverage)}};
    return rec;
}

Record to_record(const InvarianceReport& r) {
    Record rec;
    rec.name = "invariance";
    rec.inputs = {{"t", r.t}, {"N", r.N}};
    rec.estimate = r.statistic;
    rec.target = r.null_quantile;
    rec.verdict = verdict(r.inside);
    rec.detail = {{"null_median", r.null_median}, {"p_value", r.p_value}, {"overflow", r.overflow}};
    return rec;
}

Record to_record(const ResolventEstimate& r, double k_se) {
    Record rec;
    rec.name = "resolvent";
    rec.inputs = {{"lambda", vec(r.lambda)}, {"N", r.N}};
    rec.estimate = vec(r.estimate);
    rec.se = vec(r.se);
    rec.detail = {{"mean_steps", r.mean_steps}, {"k_se", k_se}};
    return rec;
}

Record to_record(const ResolventIdentityReport& r) {
    Record rec;
    rec.name = "resolvent_identity";
    rec.inputs = {{"lambda", r.lambda}, {"mu", r.mu}};
    rec.estimate = r.residual;
    rec.se = r.se_joint;
    rec.target = 0.0;
    rec.verdict = verdict(r.within);
    rec.detail = {{"R_mu", r.R_mu}, {"R_lambda", r.R_lambda}, {"nested", r.nested}};
    return rec;
}

Record to_record(const SymmetryReport& r) {
    Record rec;
    rec.name = "semigroup_symmetry";
    rec.inputs = {{"t", r.t}, {"N", r.N}};
    rec.estimate = r.difference;
    rec.se = r.se;
    rec.target = 0.0;
    rec.verdict = verdict(r.within);
    rec.detail = {{"pf_g", r.pf_g}, {"f_pg", r.f_pg}};
    return rec;
}

}  // namespace clqg
