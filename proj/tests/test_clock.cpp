#include "clqg/clock.hpp"
#include "clqg/stats.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace clqg;

namespace {

FieldLadder flat_field(int n, int J, double c, double s) {
    return constant_field(GridSpec::unit_square(n), ScaleLadder::dyadic(J), std::vector<double>(J + 1, c),
                          std::vector<double>(J + 1, s));
}

FieldLadder zero_field(int n, int J) {
    const auto ladder = ScaleLadder::dyadic(J);
    std::vector<double> vars;
    for (double e : ladder.eps) vars.push_back(std::log(1.0 / e));
    return constant_field(GridSpec::unit_square(n), ladder, std::vector<double>(J + 1, 0.0), vars);
}

}  // namespace

TEST_CASE("Brownian paths") {
    const Point x(0.5, 0.5);
    const auto a = simulate_bm(x, 0.3, 1e-3, 4, 9), b = simulate_bm(x, 0.3, 1e-3, 4, 9);
    CHECK(a.B == b.B);
    CHECK(a.steps() == 300);
    CHECK(simulate_bm(x, 0.3, 1e-3, 4, 10).B != a.B);

    std::vector<double> dx, dy, r2;
    const double dt = 0.01, T = 0.25;
    for (std::uint64_t i = 0; i < 10000; ++i) {
        const auto one = simulate_bm(x, dt, dt, 1, i);
        REQUIRE(one.steps() == 1);
        dx.push_back((one.B[1] - x).x() * (one.B[1] - x).x());
        dy.push_back((one.B[1] - x).y() * (one.B[1] - x).y());
        const auto p = simulate_bm(x, T, 0.005, 2, i);
        r2.push_back((p.B.back() - x).squaredNorm());
    }
    for (const auto& v : {dx, dy}) {
        const auto m = oracle::moments(v);
        CHECK(std::abs(m.mean - dt) <= 5.0 * m.se);
    }
    const auto m = oracle::moments(r2);
    CHECK(std::abs(m.mean - 2.0 * T) <= 5.0 * m.se);

    // extension continues the same stream
    auto c = simulate_bm(x, 0.1, 1e-3, 4, 9);
    BrownianStepper st(4, 9, 1e-3);
    for (std::size_t k = 0; k < c.steps(); ++k) st.increment();
    extend_bm(c, st, 200);
    CHECK(c.B == a.B);
}

TEST_CASE("clocks on constant fields") {
    const double c = 0.3, s = 1.7, T = 0.0078125, dt = 1.0 / 16384.0;
    const auto f = flat_field(16, 4, c, s);
    const auto path = simulate_bm(Point(0.5, 0.5), T, dt, 3, 0);
    ClockOptions o;
    o.beta = 0.5;
    o.escalate_beta = false;
    const auto raw = clock_raw(f, path, 4);
    const auto der = clock_derivative(f, path, 4, o);
    const std::size_t K = raw.knots() - 1;
    REQUIRE_FALSE(raw.exited);
    // c - 2s = -3.1 <= beta: barrier open everywhere
    CHECK(raw.raw[K] == doctest::Approx(std::exp(2.0 * c - 2.0 * s) * T).epsilon(1e-12));
    CHECK(der.der[K] == doctest::Approx((2.0 * s - c + 0.5) * std::exp(2.0 * c - 2.0 * s) * T).epsilon(1e-12));
    CHECK(der.der_untrunc[K] == doctest::Approx((2.0 * s - c) * std::exp(2.0 * c - 2.0 * s) * T).epsilon(1e-12));
    // degenerate Seneta-Heyde ratio
    CHECK(der.seneta[K] / der.der_untrunc[K] ==
          doctest::Approx(std::sqrt(s) * std::exp(2.0 * c - 2.0 * s) * T / ((2.0 * s - 2.0 * c) * std::exp(2.0 * c - 2.0 * s) * T) *
                          (2.0 * s - 2.0 * c) / (2.0 * s - c))
              .epsilon(1e-12));

    const auto z = zero_field(32, 5);
    const auto zp = simulate_bm(Point(0.5, 0.5), 0.0078125, 1.0 / 4096.0, 3, 1);
    const double s5 = std::log(32.0);
    const auto zc = clock_derivative(z, zp, 5, o);
    REQUIRE_FALSE(zc.exited);
    CHECK(zc.der.back() == doctest::Approx((2.0 * s5 + 0.5) * std::exp(-2.0 * s5) * 0.0078125).epsilon(1e-12));
    CHECK(zc.beta == 0.5);
}

TEST_CASE("log-cutoff normalization carries the drift factor") {
    const auto f = sample_field_ladder(KernelSpec::mff(1.0), GridSpec::unit_square(64), ScaleLadder::dyadic(6), 5);
    const ClockEvaluator exact(f, 6, 15.0), logc(f, 6, 15.0, ClockNormalization::LogCutoff);
    for (int ix : {3, 31, 60}) {
        const Point p = f.grid.center(ix, 17);
        ClockDensity a, b;
        REQUIRE(exact.eval(p, a));
        REQUIRE(logc.eval(p, b));
        const double H = f.variance(6, ix, 17) - std::log(64.0);
        CHECK(std::abs(H) < 0.1);
        CHECK(b.raw == doctest::Approx(a.raw * std::exp(2.0 * H)).epsilon(1e-12));
        // at a node the log-cutoff weight is eps^2 e^{2X}
        CHECK(b.raw == doctest::Approx(std::exp(2.0 * f.value(6, ix, 17)) / 4096.0).epsilon(1e-12));
    }
}

TEST_CASE("fixed-path martingales over field replicas") {
    const int J = 4;
    const FieldSynthesizer synth(KernelSpec::mff(1.0), GridSpec::unit_square(64), ScaleLadder::dyadic(J));
    const double T = 0.05, beta = 1.0;
    const auto path = simulate_bm(Point(0.5, 0.5), T, 1.0 / 8192.0, 7, 0);
    ClockOptions o;
    o.beta = beta;
    o.escalate_beta = false;
    std::vector<std::vector<double>> raw(J + 1);
    std::vector<double> der;
    for (std::size_t r = 0; r < 2000; ++r) {
        const auto f = synth.sample(17, r);
        const auto term = clock_terminal_values(f, path);
        for (int j = 0; j <= J; ++j) raw[j].push_back(term.raw[j]);
        der.push_back(clock_derivative(f, path, J, o).der.back());
    }
    const double t_exact = static_cast<double>(path.steps()) * path.dt;
    for (int j = 0; j <= J; ++j) {
        const auto m = oracle::moments(raw[j]);
        CHECK_MESSAGE(std::abs(m.mean - t_exact) <= 5.0 * m.se + 1e-12, "j=" << j << " " << m.mean);
    }
    const auto d = oracle::moments(der);
    CHECK_MESSAGE(std::abs(d.mean - beta * t_exact) <= 5.0 * d.se, d.mean << " vs " << beta * t_exact);
}

TEST_CASE("truncated and untruncated clocks differ by at most beta F_raw") {
    const int J = 7;
    const FieldSynthesizer synth(KernelSpec::mff(1.0), GridSpec::unit_square(128), ScaleLadder::dyadic(J));
    const auto path = simulate_bm(Point(0.5, 0.5), 0.02, 1.0 / 65536.0, 2, 0);
    ClockOptions o;
    o.beta = 3.0;
    o.escalate_beta = false;
    std::vector<std::vector<double>> bound(J + 1);
    for (std::size_t r = 0; r < 60; ++r) {
        const auto f = synth.sample(3, r);
        for (int j = 1; j <= J; ++j) {
            const auto c = clock_derivative(f, path, j, o);
            for (std::size_t k = 0; k < c.knots(); k += 97) {
                const double gap = std::abs(c.der[k] - c.der_untrunc[k]);
                // off the barrier the truncated density vanishes while (2s - X) may be as low as -beta
                if (std::all_of(c.barrier.begin(), c.barrier.begin() + static_cast<long>(k) + 1, [](auto b) { return b; }))
                    CHECK(gap <= o.beta * c.raw[k] * (1.0 + 1e-12) + 1e-300);
            }
            bound[j].push_back(o.beta * c.raw.back());
        }
    }
    std::vector<double> med;
    for (int j = 1; j <= J; ++j) med.push_back(median(bound[j]));
    MESSAGE("median beta F_raw: " << med.front() << " -> " << med.back());
    CHECK(med.back() < 0.5 * med.front());
}

TEST_CASE("clock inversion") {
    ClockPath lin;
    lin.dt = 1e-3;
    const double a = 2.5;
    for (int k = 0; k <= 1000; ++k) lin.der.push_back(a * k * lin.dt);
    CHECK(invert_clock(lin, 0.0) == 0.0);
    for (double t : {0.1, 0.77, 1.5}) CHECK(invert_clock(lin, t) == doctest::Approx(t / (a * kSqrt2OverPi)).epsilon(1e-12));
    CHECK_THROWS_AS(invert_clock(lin, 10.0), HorizonError);

    const auto f = sample_field_ladder(KernelSpec::mff(1.0), GridSpec::unit_square(64), ScaleLadder::dyadic(6), 8);
    const auto path = simulate_bm(Point(0.5, 0.5), 0.05, 1.0 / 16384.0, 8, 0);
    const auto c = clock_derivative(f, path, 6);
    REQUIRE_FALSE(c.exited);
    CounterRng rng(5);
    const double top = kSqrt2OverPi * c.der.back();
    for (int i = 0; i < 100; ++i) {
        const double t = top * rng.uniform();
        const double s = invert_clock(c, t);
        // sqrt(2/pi) F_der at s, by linear interpolation between knots
        const auto k = static_cast<std::size_t>(std::floor(s / c.dt));
        const double w = s / c.dt - static_cast<double>(k);
        const double F = k + 1 < c.knots() ? (1.0 - w) * c.der[k] + w * c.der[k + 1] : c.der[k];
        CHECK(std::abs(kSqrt2OverPi * F - t) <= 1e-9 * std::max(1.0, t));
    }
}

TEST_CASE("path maximum statistic") {
    const auto z = zero_field(64, 6);
    const auto path = simulate_bm(Point(0.5, 0.5), 0.01, 1.0 / 16384.0, 1, 0);
    const double a = 0.1;
    const auto rep = path_max_statistic(z, path, a);
    for (int j = 1; j <= 6; ++j) {
        const double s = std::log(std::ldexp(1.0, j));
        CHECK(rep.per_scale[j] == doctest::Approx(-2.0 * s + a * std::log(s)).epsilon(1e-12));
        if (j > 1) CHECK(rep.per_scale[j] < rep.per_scale[j - 1]);
    }
    CHECK(rep.bounded);

    const auto f = sample_field_ladder(KernelSpec::mff(1.0), GridSpec::unit_square(64), ScaleLadder::dyadic(6), 4);
    const auto p0 = path_max_statistic(f, path, 0.0), p1 = path_max_statistic(f, path, 0.2);
    for (int j = 2; j <= 6; ++j) CHECK(p0.per_scale[j] <= p1.per_scale[j]);  // sigma^2_j >= 1 from j = 2 on
    CHECK_THROWS_AS(path_max_statistic(f, path, 0.3), DomainError);
}

TEST_CASE("deep-scale path maxima rarely set records") {
    const int J = 8;
    const FieldSynthesizer synth(KernelSpec::mff(1.0), GridSpec::unit_square(256), ScaleLadder::dyadic(J));
    const auto path = simulate_bm(Point(0.5, 0.5), 0.01, 1.0 / 262144.0, 6, 0);
    int bounded = 0;
    const int R = 100;
    for (int r = 0; r < R; ++r) bounded += path_max_statistic(synth.sample(6, static_cast<std::uint64_t>(r)), path, 0.1).bounded;
    MESSAGE("bounded fraction " << static_cast<double>(bounded) / R);
    CHECK(bounded >= 0.95 * R);
}
