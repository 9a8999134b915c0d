#include "clqg/conformal.hpp"
#include "clqg/lbm.hpp"
#include "clqg/stats.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace clqg;

namespace {

/// u(x, y) with (1/2) Laplacian u = -1 on the unit square, u = 0 on the boundary.
double square_exit_time(double x, double y) {
    double u = 0.0;
    for (int m = 1; m < 400; m += 2)
        for (int n = 1; n < 400; n += 2)
            u += 32.0 / (std::pow(kPi, 4) * m * n * (m * m + n * n)) * std::sin(m * kPi * x) * std::sin(n * kPi * y);
    return u;
}

FieldLadder zero_gff(int n, int J) {
    const auto ladder = ScaleLadder::dyadic(J);
    std::vector<double> vars;
    for (double e : ladder.eps) vars.push_back(std::log(1.0 / e));
    GridSpec g = GridSpec::unit_square(n);
    g.boundary = Boundary::OddReflection;
    auto f = constant_field(g, ladder, std::vector<double>(J + 1, 0.0), vars);
    f.spec = KernelSpec::gff(Rect{0, 0, 1, 1});
    return f;
}

}  // namespace

TEST_CASE("LBM on the zero field is linearly time-changed BM") {
    const int J = 5;
    const auto ladder = ScaleLadder::dyadic(J);
    std::vector<double> vars;
    for (double e : ladder.eps) vars.push_back(std::log(1.0 / e));
    const auto f = constant_field(GridSpec::unit_square(32), ladder, std::vector<double>(J + 1, 0.0), vars);
    const double beta = 2.0, s = vars.back();
    LbmOptions o;
    o.clock.beta = beta;
    o.clock.escalate_beta = false;
    o.initial_horizon = 1e-3;
    const Point x(0.5, 0.5);
    const auto times = uniform_times(1e-5, 20);
    CHECK(times.size() == 21);
    const auto tr = sample_lbm(f, x, times, 4, 0, o);
    REQUIRE_FALSE(tr.exited);
    const double rate = (2.0 * s + beta) * std::exp(-2.0 * s) * kSqrt2OverPi;
    CHECK(tr.pos[0] == x);
    CHECK(tr.s[0] == 0.0);
    for (std::size_t m = 1; m < times.size(); ++m) {
        CHECK(tr.s[m] == doctest::Approx(times[m] / rate).epsilon(1e-9));
        CHECK((tr.pos[m] - path_position(tr.path, tr.s[m])).norm() < 1e-14);
    }
}

TEST_CASE("time grids and path positions") {
    const auto g = geometric_times(1e-3, 1.0, 4);
    REQUIRE(g.size() == 5);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == doctest::Approx(1e-3));
    CHECK(g[4] == doctest::Approx(1.0));
    CHECK(g[2] / g[1] == doctest::Approx(g[3] / g[2]));
    const auto p = simulate_bm(Point(0.5, 0.5), 0.01, 1e-3, 1, 0);
    CHECK(path_position(p, 0.003) == p.B[3]);
    CHECK((path_position(p, 0.0035) - 0.5 * (p.B[3] + p.B[4])).norm() < 1e-14);
}

TEST_CASE("LBM increments have zero mean") {
    const int J = 5;
    SynthesisOptions so;
    so.periodic = true;
    const FieldSynthesizer synth(KernelSpec::mff(1.0), GridSpec::unit_square(32), ScaleLadder::dyadic(J), so);
    const Point x(0.5, 0.5);
    LbmOptions o;
    o.initial_horizon = 0.005;
    std::vector<double> dx, dy;
    for (std::size_t r = 0; r < 10000; ++r) {
        const auto f = synth.sample(99, r);
        const auto tr = sample_lbm(f, x, {0.0, 0.05}, 99, r, o);
        REQUIRE_FALSE(tr.exited);
        CHECK(tr.pos[0] == x);
        dx.push_back(tr.pos[1].x() - x.x());
        dy.push_back(tr.pos[1].y() - x.y());
    }
    const auto mx = oracle::moments(dx), my = oracle::moments(dy);
    CHECK_MESSAGE(std::abs(mx.mean) <= 5.0 * mx.se, mx.mean << " +- " << mx.se);
    CHECK_MESSAGE(std::abs(my.mean) <= 5.0 * my.se, my.mean << " +- " << my.se);
}

TEST_CASE("horizon cap") {
    const auto f = sample_field_ladder(KernelSpec::mff(1.0), GridSpec::unit_square(32), ScaleLadder::dyadic(5), 1);
    LbmOptions o;
    o.initial_horizon = 1e-4;
    o.horizon_cap = 2e-4;
    CHECK_THROWS_AS(sample_lbm(f, Point(0.5, 0.5), {0.0, 100.0}, 1, 0, o), ResourceError);
    CHECK_THROWS_AS(sample_lbm(f, Point(2.0, 0.5), {0.0, 1.0}, 1, 0, o), DomainError);
}

TEST_CASE("exit times of the Dirichlet LBM") {
    const int J = 5;
    const FieldSynthesizer synth(KernelSpec::gff(Rect{0, 0, 1, 1}), GridSpec::unit_square(32), ScaleLadder::dyadic(J));
    const auto f = synth.sample(12);
    LbmOptions o;
    o.clock.escalate_beta = false;

    SUBCASE("start on the boundary layer") {
        const double dx = f.grid.dx;
        const auto e = exit_time_gff(f, Point(0.0, 0.5), 1, 0, o);
        CHECK(e.tau == 0.0);
        CHECK(e.tau_hat == 0.0);
        const auto near = exit_time_gff(f, Point(1e-3 * dx, 0.5), 1, 0, o);
        CHECK(near.tau < 100.0 * dx * dx);
        CHECK_THROWS_AS(exit_time_gff(f, Point(-0.1, 0.5), 1, 0, o), DomainError);
    }
    SUBCASE("the Liouville exit time grows with beta") {
        double prev_tau = -1.0, prev_hat = -1.0;
        for (double beta : {0.5, 1.0, 4.0, 16.0}) {
            o.clock.beta = beta;
            const auto e = exit_time_gff(f, Point(0.5, 0.5), 3, 0, o);
            if (prev_tau >= 0.0) CHECK(e.tau == prev_tau);
            CHECK(e.tau_hat > prev_hat);
            prev_tau = e.tau;
            prev_hat = e.tau_hat;
        }
    }
    SUBCASE("mean standard exit time from the centre") {
        const double dt = 1.0 / 65536.0;
        o.dt = dt;
        std::vector<double> tau, ref;
        std::mt19937_64 gen(2024);
        std::normal_distribution<double> n01;
        for (std::uint64_t i = 0; i < 4000; ++i) {
            tau.push_back(exit_time_gff(f, Point(0.5, 0.5), 8, i, o).tau);
            // plain discretized BM with a separate generator
            double x = 0.5, y = 0.5;
            std::size_t k = 0;
            while (x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0) {
                x += std::sqrt(dt) * n01(gen);
                y += std::sqrt(dt) * n01(gen);
                ++k;
            }
            ref.push_back(static_cast<double>(k) * dt);
        }
        const auto a = oracle::moments(tau), b = oracle::moments(ref);
        const double joint = std::hypot(a.se, b.se);
        CHECK_MESSAGE(std::abs(a.mean - b.mean) <= 5.0 * joint, a.mean << " vs " << b.mean);
        // and the continuum value, allowing the O(sqrt dt) overshoot of the discrete walk
        const double u = square_exit_time(0.5, 0.5);
        CHECK(u == doctest::Approx(0.147313).epsilon(1e-4));
        CHECK(std::abs(a.mean - u) <= 5.0 * a.se + std::sqrt(dt));
    }
}

TEST_CASE("conformal-radius clock") {
    SUBCASE("plug-in on the zero field") {
        const int J = 5;
        const auto f = zero_gff(32, J);
        const auto path = simulate_bm(Point(0.5, 0.5), 0.004, 1.0 / 4096.0, 2, 0);
        ClockOptions o;
        o.beta = 0.0;
        o.escalate_beta = false;
        const auto c = conformal_radius_clock(f, path, J, o);
        REQUIRE_FALSE(c.exited);
        const double s = std::log(32.0);
        double plug = 0.0;
        for (std::size_t k = 0; k + 1 < path.B.size(); ++k) {
            const double C = conformal_radius(Rect{0, 0, 1, 1}, path.B[k]);
            plug += conformal_clock_constant() * C * C * 2.0 * s * std::exp(-2.0 * s) * path.dt;
        }
        CHECK(c.der.back() == doctest::Approx(plug).epsilon(1e-12));
        CHECK(conformal_clock_constant() == doctest::Approx(std::exp(kEulerGamma) / 2.0).epsilon(1e-15));
    }
    SUBCASE("deep-scale agreement with the log-cutoff clock") {
        const int J = 7;
        const FieldSynthesizer synth(KernelSpec::gff(Rect{0, 0, 1, 1}), GridSpec::unit_square(128),
                                     ScaleLadder::dyadic(J));
        const auto path = simulate_bm(Point(0.5, 0.5), 0.01, 1.0 / 65536.0, 5, 0);
        ClockOptions o;
        ClockOptions lc = o;
        lc.normalization = ClockNormalization::LogCutoff;
        std::vector<double> rel;
        for (std::size_t r = 0; r < 40; ++r) {
            const auto f = synth.sample(5, r);
            const auto a = conformal_radius_clock(f, path, J, o), b = clock_derivative(f, path, J, lc);
            rel.push_back(std::abs(a.der.back() - b.der.back()) / b.der.back());
        }
        MESSAGE("median relative difference " << median(rel));
        CHECK(median(rel) <= 0.10);
    }
}
