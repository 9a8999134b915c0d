#include "clqg/field_io.hpp"
#include "clqg/field_synth.hpp"
#include "clqg/kernels.hpp"
#include "clqg/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace clqg;

namespace {

double spatial_correlation(const Grid& a, const Grid& b) {
    const Grid da = a - a.mean(), db = b - b.mean();
    return (da * db).sum() / std::sqrt(da.square().sum() * db.square().sum());
}

}  // namespace

TEST_CASE("scale zero is identically zero") {
    for (const auto& spec : {KernelSpec::mff(1.0), KernelSpec::fourier(1.0)}) {
        const auto f = sample_field_ladder(spec, GridSpec::unit_square(32), ScaleLadder::dyadic(4), 3);
        CHECK((f.X[0] == 0.0).all());
        CHECK((f.variance_grid(0) == 0.0).all());
        CHECK(f.X.size() == 5);
    }
    // the GFF cutoff starts at v = 0, so its first scale keeps the (small) large-time part
    const auto gff = KernelSpec::gff(Rect{0, 0, 1, 1});
    const auto f = sample_field_ladder(gff, GridSpec::unit_square(32), ScaleLadder::dyadic(4), 3);
    const Point c = f.grid.center(16, 16);
    CHECK(f.variance(0, 16, 16) == doctest::Approx(cutoff_covariance(gff, 1.0, c, c)).epsilon(1e-6));
    CHECK(f.variance(0, 16, 16) < 1e-3);
}

TEST_CASE("same seed gives identical ladders, different seeds independent increments") {
    const FieldSynthesizer synth(KernelSpec::mff(1.0), GridSpec::unit_square(128), ScaleLadder::dyadic(7));
    const auto a = synth.sample(11, 4), b = synth.sample(11, 4);
    for (int j = 0; j <= 7; ++j) CHECK((a.X[j] == b.X[j]).all());
    CHECK(sample_field_ladder(KernelSpec::mff(1.0), GridSpec::unit_square(128), ScaleLadder::dyadic(7), 11, {}).X[7]
              .isApprox(synth.sample(11, 0).X[7], 0.0));

    double worst = 0.0;
    for (std::size_t r = 0; r < 200; ++r) {
        const auto s = synth.sample(11, r), t = synth.sample(12, r);
        worst = std::max(worst, std::abs(spatial_correlation(s.X[7] - s.X[6], t.X[7] - t.X[6])));
    }
    CHECK(worst < 0.1);
}

TEST_CASE("MFF variance matches the cutoff covariance on the diagonal") {
    const int J = 8;
    const auto spec = KernelSpec::mff(1.0);
    const FieldSynthesizer synth(spec, GridSpec::unit_square(256), ScaleLadder::dyadic(J));
    const std::vector<std::pair<int, int>> cells{{0, 0}, {17, 201}, {128, 128}, {255, 3}, {90, 45}, {200, 250}};
    std::vector<std::vector<double>> sq(cells.size());
    for (std::size_t r = 0; r < 200; ++r) {
        const auto f = synth.sample(5, r);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double v = f.value(J, cells[c].first, cells[c].second);
            sq[c].push_back(v * v);
        }
    }
    const auto f = synth.sample(5, 0);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const Point x = f.grid.center(cells[c].first, cells[c].second);
        const double target = cutoff_covariance(spec, f.ladder.eps[J], x, x);
        const auto m = oracle::moments(sq[c]);
        CHECK_MESSAGE(std::abs(m.mean - target) <= 5.0 * m.se, "cell " << c << ": " << m.mean << " vs " << target);
        // model bookkeeping agrees with the kernel up to the clipping error
        CHECK(f.variance(J, cells[c].first, cells[c].second) == doctest::Approx(target).epsilon(0.02));
    }
}

TEST_CASE("bilinear interpolation") {
    const auto f = sample_field_ladder(KernelSpec::mff(1.0), GridSpec::unit_square(16), ScaleLadder::dyadic(4), 9);
    for (int ix : {0, 5, 15})
        for (int iy : {0, 7, 15}) CHECK(field_at(f, 4, f.grid.center(ix, iy)) == f.value(4, ix, iy));
    const Point mid = 0.5 * (f.grid.center(3, 6) + f.grid.center(4, 6));
    CHECK(field_at(f, 4, mid) == doctest::Approx(0.5 * (f.value(4, 3, 6) + f.value(4, 4, 6))).epsilon(1e-14));

    const auto c = constant_field(GridSpec::unit_square(8), ScaleLadder::dyadic(2), {0.0, 1.5, -0.25}, {0.0, 1.0, 2.0});
    CounterRng rng(3);
    const Rect d = c.grid.domain();
    for (int i = 0; i < 100; ++i) {
        const Point p(d.x0 + rng.uniform() * d.width(), d.y0 + rng.uniform() * d.height());
        CHECK(field_at(c, 1, p) == doctest::Approx(1.5).epsilon(1e-14));
        CHECK(field_at(c, 2, p) == doctest::Approx(-0.25).epsilon(1e-14));
        CHECK(variance_at(c, 2, p) == doctest::Approx(2.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(field_at(c, 1, Point(0.01, 0.5)), DomainError);
}

TEST_CASE("periodic grids wrap") {
    SynthesisOptions o;
    o.periodic = true;
    const FieldSynthesizer synth(KernelSpec::mff(1.0), GridSpec::unit_square(32), ScaleLadder::dyadic(5), o);
    const auto f = synth.sample(2);
    CHECK(f.grid.boundary == Boundary::Periodic);
    const Rect e = f.grid.extent();
    const Point p(e.x0 + 0.3 * e.width(), e.y0 + 0.6 * e.height());
    CHECK(field_at(f, 5, p) == doctest::Approx(field_at(f, 5, p + Point(e.width(), -e.height()))).epsilon(1e-12));
    // between the last and the first column: average of the two
    const Point seam(e.x1, f.grid.center(0, 4).y());
    CHECK(field_at(f, 5, seam) ==
          doctest::Approx(0.5 * (f.value(5, f.grid.nx - 1, 4) + f.value(5, 0, 4))).epsilon(1e-12));
}

TEST_CASE("empirical covariance against the kernel") {
    const int J = 6;
    const auto spec = KernelSpec::mff(1.0);
    const FieldSynthesizer synth(spec, GridSpec::unit_square(64), ScaleLadder::dyadic(J));
    std::vector<FieldLadder> fields;
    for (std::size_t r = 0; r < 200; ++r) fields.push_back(synth.sample(21, r));

    auto check_pair = [&](int j, const Point& x, const Point& y) {
        std::vector<double> a, b;
        for (const auto& f : fields) {
            a.push_back(field_at(f, j, x));
            b.push_back(field_at(f, j, y));
        }
        const double ma = oracle::moments(a).mean, mb = oracle::moments(b).mean;
        std::vector<double> prod;
        for (std::size_t i = 0; i < a.size(); ++i) prod.push_back((a[i] - ma) * (b[i] - mb));
        const double se = oracle::moments(prod).se;
        const double emp = empirical_covariance(fields, j, x, y);
        const double target = cutoff_covariance(spec, fields[0].ladder.eps[j], x, y);
        CHECK_MESSAGE(std::abs(emp - target) <= 5.0 * se, "j=" << j << " emp " << emp << " target " << target);
        return emp;
    };
    const Point x = fields[0].grid.center(20, 20);
    CHECK(empirical_covariance(fields, J, x, x) >= 0.0);
    check_pair(J, x, fields[0].grid.center(50, 50));  // far apart: near zero
    for (int j : {3, 5, 6}) check_pair(j, x, x + Point(fields[0].ladder.eps[j], 0.0));
}

TEST_CASE("Dirichlet GFF ladder") {
    const auto spec = KernelSpec::gff(Rect{0, 0, 1, 1});
    const FieldSynthesizer synth(spec, GridSpec::unit_square(32), ScaleLadder::dyadic(4));
    const auto f = synth.sample(1);
    CHECK(f.grid.boundary == Boundary::OddReflection);
    for (int ix : {0, 10, 31}) {
        const Point x = f.grid.center(ix, 16);
        CHECK(f.variance(4, ix, 16) == doctest::Approx(cutoff_covariance(spec, f.ladder.eps[4], x, x)).epsilon(1e-6));
    }
    // the field vanishes on the boundary through the odd ghosts
    CHECK(std::abs(field_at(f, 4, Point(0.0, 0.5))) < 1e-12);
    CHECK(variance_at(f, 4, Point(1.0, 0.3)) < 1e-12);
}

TEST_CASE("field cache round trip and corruption") {
    const auto f = sample_field_ladder(KernelSpec::mff(1.0), GridSpec::unit_square(16), ScaleLadder::dyadic(4), 77);
    const std::string bytes = encode_field(f);
    const FieldLadder g = decode_field(bytes);
    CHECK(g.grid == f.grid);
    CHECK(g.seed == 77);
    CHECK(g.ladder.eps == f.ladder.eps);
    for (int j = 0; j <= 4; ++j) {
        CHECK((g.X[j] == f.X[j]).all());
        CHECK((g.variance_grid(j) == f.variance_grid(j)).all());
    }
    CHECK(encode_field(g) == bytes);

    std::string bad = bytes;
    bad[bad.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(decode_field(bad), ChecksumError);

    const auto dir = std::filesystem::temp_directory_path() / "clqg_field_io_test";
    std::filesystem::create_directories(dir);
    const auto file = dir / "f.clqg";
    save_field_cache(file, f);
    GridMeasure m;
    m.kind = MeasureKind::TRUNCATED;
    m.scale = 4;
    m.beta = 2.0;
    m.grid = f.grid;
    m.mass = f.X[4].exp();
    append_measure_block(file, m);
    const auto cache = load_field_cache(file);
    REQUIRE(cache.measures.size() == 1);
    CHECK((cache.measures[0].mass == m.mass).all());
    CHECK(cache.measures[0].beta == 2.0);
    {
        std::fstream fs(file, std::ios::in | std::ios::out | std::ios::binary);
        fs.seekp(-3, std::ios::end);
        fs.put('\x7f');
    }
    CHECK_THROWS_AS(load_field_cache(file), ChecksumError);
    std::filesystem::remove_all(dir);
}
