#include "clqg/conformal.hpp"
#include "clqg/kernels.hpp"
#include "clqg/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace clqg;

TEST_CASE("mff_green against quadrature oracle") {
    const double g1 = mff_green(1.0, 1.0);
    CHECK(g1 == doctest::Approx(0.4210).epsilon(1e-4));
    CHECK(g1 == doctest::Approx(oracle::mff_green(1.0, 1.0)).epsilon(1e-8));

    const double g10 = mff_green(10.0, 1.0);
    CHECK(g10 > 0.0);
    CHECK(g10 < 1e-4);
    CHECK(g10 == doctest::Approx(oracle::mff_green(10.0, 1.0)).epsilon(1e-6));

    for (double m : {0.5, 1.0, 2.0})
        for (double r : {0.05, 0.3, 2.0}) CHECK(mff_green(r, m) == doctest::Approx(oracle::mff_green(r, m)).epsilon(1e-7));
}

TEST_CASE("mff_green has a logarithmic singularity") {
    for (double m : {0.5, 1.0, 3.0}) {
        std::vector<double> v;
        for (double r : {1e-2, 1e-4, 1e-6}) v.push_back(mff_green(r, m) + std::log(r));
        CHECK(std::abs(v[1] - v[0]) < 1e-2);
        CHECK(std::abs(v[2] - v[1]) < 1e-4);
        // limit ln 2 - gamma_E - ln m
        CHECK(v[2] == doctest::Approx(std::log(2.0) - kEulerGamma - std::log(m)).epsilon(1e-6));
    }
    CHECK_THROWS_AS(mff_green(0.0, 1.0), DomainError);
    CHECK_THROWS_AS(mff_green(1.0, -1.0), DomainError);
}

TEST_CASE("star-scale kernel") {
    CHECK(star_scale_kernel(Point(0.0, 0.0), 1.0) == 1.0);
    CHECK(star_scale_kernel(0.0, 3.0) == 1.0);
    const double k1 = star_scale_kernel(1.0, 1.0);
    CHECK(k1 > 0.0);
    CHECK(k1 < 1.0);
    CHECK(k1 == doctest::Approx(oracle::star_kernel(1.0, 1.0)).epsilon(1e-9));
    for (double z : {0.01, 0.3, 2.5, 8.0})
        CHECK(star_scale_kernel(z, 1.3) == doctest::Approx(oracle::star_kernel(z, 1.3)).epsilon(1e-8));

    CounterRng rng(7);
    for (int i = 0; i < 50; ++i) {
        const Point z(4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0);
        CHECK(star_scale_kernel(z, 0.7) == star_scale_kernel(Point(-z), 0.7));
    }
}

TEST_CASE("cutoff covariance of the MFF") {
    const auto mff = KernelSpec::mff(1.0);
    const Point x(0.3, 0.4);
    for (int k : {1, 4, 10}) {
        const double eps = std::ldexp(1.0, -k);
        CHECK(cutoff_covariance(mff, eps, x, x) == doctest::Approx(std::log(1.0 / eps)).epsilon(1e-14));
    }
    CHECK(cutoff_covariance(mff, 1.0, x, Point(0.5, 0.5)) == 0.0);
    CHECK(cutoff_covariance(KernelSpec::fourier(1.0), 1.0, x, Point(0.5, 0.5)) == 0.0);

    for (double r : {0.001, 0.05, 0.5})
        for (double eps : {0.5, 1.0 / 64.0})
            CHECK(cutoff_covariance(mff, eps, x, x + Point(r, 0.0)) ==
                  doctest::Approx(oracle::mff_cutoff(1.0, eps, r)).epsilon(1e-7));

    const double eps = std::ldexp(1.0, -10);
    const double v = cutoff_covariance(mff, eps, x, x + Point(std::ldexp(1.0, -11), 0.0));
    const double c = sandwich_constant(mff, Rect{0, 0, 1, 1}, {eps});
    CHECK(c > 0.0);
    CHECK(v >= std::log(1024.0) - c);
    CHECK(v <= std::log(1024.0) + c);
    CHECK(v == doctest::Approx(oracle::mff_cutoff(1.0, eps, std::ldexp(1.0, -11))).epsilon(1e-7));
}

TEST_CASE("Fourier family with the default profile") {
    const auto f = KernelSpec::fourier(1.0);
    const Point x(0.2, 0.2);
    // diagonal: int_1^{1/eps} u/(u^2+1) du
    for (double eps : {0.5, 1.0 / 16.0, 1.0 / 256.0})
        CHECK(cutoff_covariance(f, eps, x, x) ==
              doctest::Approx(0.5 * std::log((1.0 / (eps * eps) + 1.0) / 2.0)).epsilon(1e-8));
    for (double r : {0.01, 0.15, 0.6}) {
        const double eps = 1.0 / 32.0;
        auto g = [r](double u) { return u / (u * u + 1.0) * std::cyl_bessel_j(0.0, u * r); };
        CHECK(cutoff_covariance(f, eps, x, x + Point(0.0, r)) ==
              doctest::Approx(oracle::simpson(g, 1.0, 1.0 / eps, 1e-12, 512)).epsilon(1e-7));
    }
}

TEST_CASE("Dirichlet heat kernel") {
    const Rect d{0.0, 0.0, 1.0, 1.0};
    // symmetric and zero on the boundary
    CHECK(dirichlet_heat_kernel(d, 0.1, Point(0.2, 0.3), Point(0.6, 0.7)) ==
          doctest::Approx(dirichlet_heat_kernel(d, 0.1, Point(0.6, 0.7), Point(0.2, 0.3))));
    CHECK(dirichlet_heat_kernel(d, 0.1, Point(0.0, 0.3), Point(0.6, 0.7)) == 0.0);
    // short time: close to the free Gaussian kernel (generator 1/2 Laplacian)
    const double t = 1e-3;
    const double free = std::exp(-0.5 * 0.01 * 0.01 / t) / (2.0 * kPi * t);
    CHECK(dirichlet_heat_kernel(d, t, Point(0.5, 0.5), Point(0.51, 0.5)) == doctest::Approx(free).epsilon(1e-8));
    // the two series representations agree across the switch-over time
    for (double tt : {0.09, 0.1, 0.11, 0.2}) {
        double sine = 0.0;
        for (int k = 1; k < 200; ++k)
            sine += 2.0 * std::exp(-0.5 * kPi * kPi * k * k * tt) * std::sin(k * kPi * 0.3) * std::sin(k * kPi * 0.55);
        CHECK(dirichlet_heat_kernel_1d(tt, 0.3, 0.55, 1.0) == doctest::Approx(sine).epsilon(1e-10));
    }
}

TEST_CASE("assumption diagnostics") {
    const std::vector<double> ladder{1.0, 0.5, 0.25, 0.125, 0.0625};
    SUBCASE("MFF passes every check") {
        for (const auto& row : assumption_report(KernelSpec::mff(1.0), Rect{0, 0, 1, 1}, ladder))
            CHECK_MESSAGE(row.verdict != "FAIL", row.assumption);
    }
    SUBCASE("GFF on a sub-window passes every check") {
        const auto gff = KernelSpec::gff(Rect{0, 0, 1, 1});
        for (const auto& row : assumption_report(gff, Rect{0.25, 0.25, 0.75, 0.75}, ladder))
            CHECK_MESSAGE(row.verdict != "FAIL", row.assumption);
    }
    SUBCASE("a profile with a negative lobe fails A.1") {
        KernelSpec bad;
        bad.family = KernelFamily::FOURIER;
        bad.profile.radii = {0.0, 2.0, 4.0, 8.0};
        bad.profile.values = {1.0, -0.5, 0.05, 1.0 / 64.0};
        CHECK_THROWS_AS(bad.validate(), DomainError);
        const auto rows = assumption_report(bad, Rect{0, 0, 1, 1}, ladder);
        CHECK(rows.front().assumption.rfind("A.1", 0) == 0);
        CHECK(rows.front().verdict == "FAIL");
    }
    const auto csv = diagnostics_csv(assumption_report(KernelSpec::mff(1.0), Rect{0, 0, 1, 1}, ladder));
    CHECK(csv.rfind("assumption,statistic,tolerance,verdict\n", 0) == 0);
}

TEST_CASE("kernel parameter blocks round-trip") {
    for (const auto& s : {KernelSpec::mff(2.0), KernelSpec::gff(Rect{0, 0, 2, 1}),
                          KernelSpec::fourier_tabulated({0.5, 1.0, 2.0}, {1.0, 0.8, 0.25})}) {
        const auto back = KernelSpec::from_parameters(s.family, s.parameters());
        CHECK(back.parameters() == s.parameters());
    }
    CHECK_THROWS_AS(KernelSpec::mff(0.0), DomainError);
    CHECK_THROWS_AS(KernelSpec::fourier_tabulated({0.5, 1.0}, {1.0, 2.0}), DomainError);
}

TEST_CASE("conformal radius") {
    CHECK(conformal_radius_disc(Point(0, 0), 1.0, Point(0, 0)) == 1.0);
    CHECK(conformal_radius_disc(Point(1, 1), 2.0, Point(1, 1)) == 2.0);
    // unit square at its centre, from the Schwarz-Christoffel map of the disc
    const double c = conformal_radius(Rect{0, 0, 1, 1}, Point(0.5, 0.5));
    CHECK(c == doctest::Approx(4.0 * std::sqrt(kPi) / (std::tgamma(0.25) * std::tgamma(0.25))).epsilon(1e-9));
    // scaling and boundary decay
    CHECK(conformal_radius(Rect{0, 0, 2, 2}, Point(1, 1)) == doctest::Approx(2.0 * c).epsilon(1e-12));
    CHECK(conformal_radius(Rect{0, 0, 1, 1}, Point(0.5, 1e-4)) < 5e-4);
}
