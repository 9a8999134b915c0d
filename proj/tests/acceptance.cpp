// Acceptance suite: one line per criterion, "criterion N: PASS|FAIL ...".
// Usage: clqg_acceptance [N ...]   (no arguments runs every criterion)

#include "clqg/clock.hpp"
#include "clqg/config.hpp"
#include "clqg/estimators.hpp"
#include "clqg/field_synth.hpp"
#include "clqg/parallel.hpp"
#include "clqg/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace clqg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double limit_seconds;  // 0: no runtime bound
    std::function<Outcome()> run;
};

const int kThreads = resolve_threads(0);
const Rect kUnit{0.0, 0.0, 1.0, 1.0};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

ReplicaFn replicas_of(const FieldSynthesizer& synth, std::uint64_t seed) {
    return [&synth, seed](std::size_t r) { return synth.sample(seed, r); };
}

FieldLadder periodic_field(Eigen::Index n, int J, std::uint64_t seed) {
    return sample_field_ladder(KernelSpec::mff(1.0), GridSpec::unit_square(n), ScaleLadder::dyadic(J), seed,
                               SynthesisOptions{2, 4, 0.05, true});
}

/// Largest |mean - target| / se over scales, with its scale.
std::string worst_z(const ScaleMeanReport& r) {
    double worst = 0.0;
    std::size_t at = 0;
    for (std::size_t j = 0; j < r.mean.size(); ++j) {
        const double z = r.se[j] > 0.0 ? std::abs(r.mean[j] - r.target) / r.se[j] : 0.0;
        if (z > worst) {
            worst = z;
            at = j;
        }
    }
    return "max |z| " + fmt(worst, 3) + " at j=" + std::to_string(at);
}

Outcome derivative_martingale() {
    const FieldSynthesizer synth(KernelSpec::mff(1.0), GridSpec::unit_square(256), ScaleLadder::dyadic(8));
    const auto rep = derivative_martingale_test(replicas_of(synth, 101), 10000, kUnit, kThreads);
    return {rep.all_within, "256^2 J=8, 10^4 replicas, " + worst_z(rep)};
}

Outcome spectrum() {
    const int J = 10;
    const FieldSynthesizer synth(KernelSpec::mff(1.0), GridSpec::unit_square(1024), ScaleLadder::dyadic(J));
    SpectrumAccumulator acc({0.2, 0.5, 0.8}, {});
    acc.configure(synth.grid());
    const ExperimentConfig defaults;
    auto rows = parallel_map(100, kThreads, [&](std::size_t r) {
        const FieldLadder f = synth.sample(102, r);
        return acc.compute_row(truncated_measure(f, J, defaults.beta));
    });
    for (auto& row : rows) acc.add_row(std::move(row));
    const auto est = acc.finish();
    bool ok = true;
    std::string d = "1024^2 J=10, 100 replicas, xi";
    for (std::size_t i = 0; i < est.qs.size(); ++i) {
        ok = ok && std::abs(est.xi[i] - est.target[i]) <= 0.15;
        d += " " + fmt(est.xi[i], 3) + "/" + fmt(est.target[i], 3);
    }
    return {ok, d};
}

Outcome seneta_heyde() {
    const FieldSynthesizer synth(KernelSpec::mff(1.0), GridSpec::unit_square(512), ScaleLadder::dyadic(9));
    const auto rep = seneta_heyde_measure_ratio(replicas_of(synth, 103), 200, kUnit, kThreads);
    const bool ok = rep.monotone_last4 && rep.final_rel_error <= 0.2;
    std::string d = "512^2 J=9, 200 replicas, medians";
    for (std::size_t j = rep.median.size() - 4; j < rep.median.size(); ++j) d += " " + fmt(rep.median[j], 3);
    d += ", target " + fmt(rep.target, 3) + ", monotone " + (rep.monotone_last4 ? "yes" : "no") +
         ", relative error " + fmt(rep.final_rel_error, 3);
    return {ok, d};
}

Outcome clock_martingale() {
    const Eigen::Index n = 64;
    const FieldSynthesizer synth(KernelSpec::mff(1.0), GridSpec::unit_square(n), ScaleLadder::dyadic(6));
    const double dx = 1.0 / static_cast<double>(n);
    const auto path = simulate_bm(Point(0.5, 0.5), 0.05, 0.25 * dx * dx, 104, 0);
    const auto rep = clock_martingale_test(replicas_of(synth, 104), 20000, path, kThreads);
    std::string d = "64^2 J=6, 2*10^4 replicas, " + worst_z(rep) + ", medians";
    for (std::size_t j = rep.median.size() - 4; j < rep.median.size(); ++j) d += " " + fmt(rep.median[j], 3);
    return {rep.all_within && rep.median_decreasing_last4, d};
}

Outcome resolvent() {
    const auto f = periodic_field(64, 6, 105);
    WalkOptions w;
    w.seed = 105;
    w.threads = kThreads;
    const auto est = resolvent_estimate(f, [](const Point&) { return 1.0; }, Point(0.5, 0.5), {0.5, 1.0, 2.0}, 10000, w);
    bool ok = true;
    std::string d = "64^2 J=6 torus, N=10^4, lambda*R";
    for (std::size_t i = 0; i < est.lambda.size(); ++i) {
        const double v = est.lambda[i] * est.estimate[i];
        ok = ok && std::abs(v - 1.0) <= 3.0 * est.lambda[i] * est.se[i] + 1e-8;
        d += " " + fmt(v, 10);
    }
    return {ok, d};
}

Outcome resolvent_identity_check() {
    const auto f = periodic_field(32, 5, 106);
    WalkOptions w;
    w.seed = 106;
    w.threads = kThreads;
    const TestFunction g = [](const Point& p) {
        return std::cos(2.0 * kPi * p.x()) + 0.5 * std::sin(2.0 * kPi * p.y());
    };
    const auto rep = resolvent_identity(f, g, Point(0.3, 0.6), 1.0, 2.0, 10000, 10000, 8, w);
    return {rep.within, "32^2 J=5 torus, (lambda,mu)=(1,2), residual " + fmt(rep.residual, 3) + " +- " +
                            fmt(rep.se_joint, 3)};
}

Outcome invariance() {
    const auto f = periodic_field(128, 7, 107);
    bool ok = true;
    std::string d = "128^2 J=7 torus, N=10^4";
    for (double t : {0.0, 0.05}) {
        InvarianceOptions o;
        o.t = t;
        o.N = 10000;
        o.bootstrap = 2000;
        o.walk.seed = 107;
        o.walk.threads = kThreads;
        const auto rep = invariance_test(f, o);
        ok = ok && rep.inside;
        d += ", t=" + fmt(t) + " stat " + fmt(rep.statistic, 4) + " q " + fmt(rep.null_quantile, 4) + " p " +
             fmt(rep.p_value, 3);
    }
    return {ok, d};
}

Outcome envelope() {
    const int J = 9;
    const auto f = sample_field_ladder(KernelSpec::mff(1.0), GridSpec::unit_square(512), ScaleLadder::dyadic(J), 108);
    EnvelopeOptions o;
    o.chi = 0.1;
    o.R = {2.0, 4.0, 8.0, 16.0};
    o.seed = 108;
    const auto rep = bessel_envelope(f, truncated_measure(f, J, 1.0), o);
    const int k = rep.selected;
    const bool ok = k >= 0 && rep.mass_coverage[k] > rep.uniform_coverage[k];
    std::string d = "512^2 J=9, chi=0.1, mass/uniform coverage";
    for (std::size_t i = 0; i < rep.R.size(); ++i)
        d += " R=" + fmt(rep.R[i]) + ":" + fmt(rep.mass_coverage[i], 3) + "/" + fmt(rep.uniform_coverage[i], 3);
    return {ok, d};
}

Outcome modulus() {
    const int J = 9;
    const auto f = sample_field_ladder(KernelSpec::mff(1.0), GridSpec::unit_square(512), ScaleLadder::dyadic(J), 109);
    ModulusOptions o;
    o.exponent = 0.4;
    o.points = 1000;
    o.seed = 109;
    const ExperimentConfig defaults;
    const auto rep = modulus_profile(truncated_measure(f, J, defaults.beta), o);
    return {rep.bounded_fraction >= 0.9,
            "512^2 J=9, gamma=0.4, bounded fraction " + fmt(rep.bounded_fraction, 3)};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "clqg_acceptance_determinism";
    fs::remove_all(root);
    auto config = [&](int threads, const char* sub) {
        ExperimentConfig c = parse_config(R"(
seed = 110
grid.nx = 64
grid.periodic = true
ladder.depth = 6
replicas = 4
stages = field, measure, clock, lbm
measure.kinds = seneta_heyde, derivative, truncated
estimators = spectrum, seneta_heyde, martingale, envelope, modulus, resolvent, invariance
path.T = 0.01
lbm.T = 0.01
lbm.trajectories = 2
resolvent.N = 200
invariance.N = 200
invariance.bootstrap = 50
)");
        c.threads = threads;
        c.output = (root / sub).string();
        return c;
    };
    const auto a = run(config(1, "t1"), RunOptions{});
    const auto b = run(config(8, "t8"), RunOptions{});
    bool ok = a.manifest_hash == b.manifest_hash && a.outputs == b.outputs;
    std::size_t compared = 0;
    for (const auto& [file, hash] : a.outputs) {
        ok = ok && slurp(root / "t1" / file) == slurp(root / "t8" / file);
        ++compared;
    }
    ok = ok && slurp(root / "t1" / "manifest.json").size() > 0;
    fs::remove_all(root);
    return {ok, std::to_string(compared) + " output files compared, manifest " + a.manifest_hash + " vs " +
                    b.manifest_hash};
}

Outcome unit_suites() {
    std::stringstream list(CLQG_UNIT_SUITES);
    std::string exe;
    bool ok = true;
    std::string d;
    while (std::getline(list, exe, '|')) {
        const std::string cmd = "\"" + exe + "\" > /dev/null 2>&1";
        const int rc = std::system(cmd.c_str());
        const bool pass = rc == 0;
        ok = ok && pass;
        d += (d.empty() ? "" : ", ") + fs::path(exe).filename().string() + (pass ? " ok" : " failed");
    }
    return {ok && !d.empty(), d};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, "derivative martingale zero mean", 600.0, derivative_martingale},
        {2, "multifractal spectrum", 1800.0, spectrum},
        {3, "Seneta-Heyde constant", 1200.0, seneta_heyde},
        {4, "clock vanishing and martingale", 600.0, clock_martingale},
        {5, "resolvent normalization", 900.0, resolvent},
        {6, "resolvent identity", 1800.0, resolvent_identity_check},
        {7, "invariance of the derivative measure", 1800.0, invariance},
        {8, "Bessel envelope", 900.0, envelope},
        {9, "modulus of continuity", 600.0, modulus},
        {10, "determinism across thread counts", 300.0, determinism},
        {11, "unit and property suites", 0.0, unit_suites},
    };
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
    bool all_pass = true;
    for (const auto& c : all) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = c.limit_seconds <= 0.0 || secs <= c.limit_seconds;
        const bool pass = o.pass && in_time;
        all_pass = all_pass && pass;
        std::cout << "criterion " << c.id << ": " << (pass ? "PASS" : "FAIL") << "  " << c.name << "; " << o.detail
                  << "; " << fmt(secs, 4) << " s";
        if (c.limit_seconds > 0.0) std::cout << " (limit " << fmt(c.limit_seconds, 4) << " s)";
        if (!in_time) std::cout << " over the runtime limit";
        std::cout << std::endl;
    }
    return all_pass ? 0 : 1;
}
