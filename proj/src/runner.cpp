#include "clqg/runner.hpp"

#include "clqg/estimators.hpp"
#include "clqg/field_io.hpp"
#include "clqg/hash.hpp"
#include "clqg/parallel.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>

namespace clqg {

namespace fs = std::filesystem;

RunOptions default_run_options() {
    RunOptions o;
    if (const char* d = std::getenv("CLQG_CACHE_DIR"); d && *d) o.cache_dir = d;
    return o;
}

Json RunManifest::to_json() const {
    Json j;
    j["config_hash"] = config_hash;
    j["version"] = version;
    j["seed"] = seed;
    j["task_seeds"] = task_seeds;
    j["outputs"] = outputs;
    j["timings"] = timings;
    j["cache_hits"] = cache_hits;
    j["manifest_hash"] = manifest_hash;
    return j;
}

std::string field_cache_key(const ExperimentConfig& cfg, std::uint64_t replica) {
    std::istringstream is(canonical_config(cfg));
    std::string line, block = std::string("version=") + CLQG_VERSION + "\n";
    while (std::getline(is, line)) {
        for (const char* prefix : {"kernel.", "grid.", "ladder.", "synth.", "seed="})
            if (line.rfind(prefix, 0) == 0) block += line + "\n";
    }
    block += "replica=" + std::to_string(replica) + "\n";
    return hex64(fnv1a64(block));
}

namespace {

using Clock = std::chrono::steady_clock;

class OutputSet {
public:
    explicit OutputSet(fs::path root) : root_(std::move(root)) {}

    void write(const std::string& rel, const std::string& content) {
        const fs::path p = root_ / rel;
        fs::create_directories(p.parent_path());
        std::ofstream os(p, std::ios::binary | std::ios::trunc);
        if (!os) throw ResourceError("cannot write " + p.string());
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw ResourceError("short write to " + p.string());
        std::lock_guard<std::mutex> lock(mutex_);
        hashes_[rel] = hex64(fnv1a64(content));
    }
    const std::map<std::string, std::string>& hashes() const { return hashes_; }

private:
    fs::path root_;
    std::mutex mutex_;
    std::map<std::string, std::string> hashes_;
};

class FieldSource {
public:
    FieldSource(const ExperimentConfig& cfg, fs::path cache) : cfg_(cfg), cache_(std::move(cache)) {
        if (!cache_.empty()) fs::create_directories(cache_);
    }

    FieldLadder field(std::uint64_t r) {
        if (!cache_.empty()) {
            const fs::path p = path(r);
            if (fs::exists(p)) {
                ++hits_;
                return load_field_cache(p).field;
            }
        }
        FieldLadder f = synth().sample(cfg_.seed, r);
        if (!cache_.empty()) save_field_cache(path(r), f);
        return f;
    }

    /// Measure of the given kind at the configured scale, from the cache when present.
    GridMeasure measure(const FieldLadder& f, const std::string& kind) {
        const int j = cfg_.resolved_scale();
        const MeasureKind k = kind == "seneta_heyde" ? MeasureKind::SENETA_HEYDE
                              : kind == "derivative" ? MeasureKind::DERIVATIVE
                                                     : MeasureKind::TRUNCATED;
        const double beta = k == MeasureKind::TRUNCATED ? cfg_.beta : 0.0;
        if (!cache_.empty()) {
            const fs::path p = path(f.replica);
            if (fs::exists(p)) {
                for (auto& m : load_field_cache(p).measures)
                    if (m.kind == k && m.scale == j && m.beta == beta) {
                        ++hits_;
                        return m;
                    }
            }
        }
        GridMeasure m = k == MeasureKind::SENETA_HEYDE ? seneta_heyde_measure(f, j)
                        : k == MeasureKind::DERIVATIVE ? derivative_measure(f, j)
                                                       : truncated_measure(f, j, beta);
        if (!cache_.empty() && fs::exists(path(f.replica))) append_measure_block(path(f.replica), m);
        return m;
    }

    std::size_t hits() const { return hits_.load(); }

private:
    fs::path path(std::uint64_t r) const { return cache_ / ("field-" + field_cache_key(cfg_, r) + ".clqg"); }
    const FieldSynthesizer& synth() {
        std::call_once(once_, [&] {
            synth_ = std::make_unique<FieldSynthesizer>(cfg_.kernel_spec(), cfg_.grid_spec(), cfg_.ladder(),
                                                        cfg_.synthesis_options());
        });
        return *synth_;
    }

    const ExperimentConfig& cfg_;
    fs::path cache_;
    std::once_flag once_;
    std::unique_ptr<FieldSynthesizer> synth_;
    std::atomic<std::size_t> hits_{0};
};

bool has(const std::vector<std::string>& v, const char* s) { return std::find(v.begin(), v.end(), s) != v.end(); }

std::string f2s(double v) { return format_double(v); }

// Replicas whose per-replica traces are written as CSV.
constexpr std::size_t kTraceReplicas = 1;

struct ReplicaOutput {
    std::string field_rows, measure_rows, clock_rows, lbm_lines;
    double t_field = 0.0, t_measure = 0.0, t_clock = 0.0, t_lbm = 0.0;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

RunManifest run(const ExperimentConfig& cfg, const RunOptions& options) {
    cfg.validate();
    const int threads = options.threads.value_or(cfg.threads);
    const fs::path out = cfg.output;
    fs::create_directories(out);
    OutputSet files(out);
    FieldSource source(cfg, options.cache_dir);
    auto log = [&](const std::string& s) {
        if (options.log) *options.log << s << '\n';
    };

    RunManifest man;
    man.config_hash = config_hash(cfg);
    man.version = CLQG_VERSION;
    man.seed = cfg.seed;
    const auto R = static_cast<std::size_t>(cfg.replicas);
    for (std::size_t r = 0; r < R; ++r) {
        man.task_seeds["field/" + std::to_string(r)] = hex64(derive_key(cfg.seed, {r, tag(StreamTag::Field)}));
        if (has(cfg.stages, "clock") || has(cfg.stages, "lbm"))
            man.task_seeds["path/" + std::to_string(r)] = hex64(derive_key(cfg.seed, {tag(StreamTag::Path), r}));
    }
    files.write("config.txt", canonical_config(cfg));

    const bool want_field = has(cfg.stages, "field"), want_measure = has(cfg.stages, "measure");
    const bool want_clock = has(cfg.stages, "clock"), want_lbm = has(cfg.stages, "lbm");
    const int j = cfg.resolved_scale();
    const Point x = cfg.start_point();
    const double dt = cfg.path_dt();

    // ---- per-replica stages
    const auto t_stages = Clock::now();
    const auto per = parallel_map(cfg.stages.empty() ? 0 : R, threads, [&](std::size_t r) {
        ReplicaOutput o;
        auto t0 = Clock::now();
        const FieldLadder f = source.field(r);
        o.t_field = seconds_since(t0);
        if (want_field) {
            for (int s = 0; s <= f.depth(); ++s) {
                const Grid& X = f.X[static_cast<std::size_t>(s)];
                const double mean = X.mean();
                const double var = (X - mean).square().mean();
                o.field_rows += std::to_string(r) + "," + std::to_string(s) + "," + f2s(f.ladder.eps[static_cast<std::size_t>(s)]) +
                                "," + f2s(f.variance_grid(s).mean()) + "," + f2s(mean) + "," + f2s(var) + "," +
                                f2s(X.minCoeff()) + "," + f2s(X.maxCoeff()) + "\n";
            }
        }
        if (want_measure) {
            t0 = Clock::now();
            for (const auto& kind : cfg.measure_kinds) {
                const GridMeasure m = source.measure(f, kind);
                o.measure_rows += std::to_string(r) + "," + kind + "," + std::to_string(m.scale) + "," + f2s(m.beta) +
                                  "," + f2s(m.total()) + "," + std::to_string(m.negative_cells()) + "\n";
                if (r < kTraceReplicas) {
                    std::ostringstream os;
                    write_measure_csv(os, m);
                    files.write("measures/" + kind + "_r" + std::to_string(r) + ".csv", os.str());
                }
            }
            o.t_measure = seconds_since(t0);
        }
        if (want_clock) {
            t0 = Clock::now();
            const BrownianPath path = simulate_bm(x, cfg.T, dt, cfg.seed, r);
            const ClockPath c = clock_derivative(f, path, j, cfg.clock_options());
            o.clock_rows = std::to_string(r) + "," + f2s(c.beta) + "," + f2s(c.raw.back()) + "," + f2s(c.der.back()) +
                           "," + f2s(c.der_untrunc.back()) + "," + (c.exited ? "1" : "0") + "\n";
            if (r < kTraceReplicas) {
                std::ostringstream os;
                write_clock_csv(os, path, c);
                files.write("clock/clock_r" + std::to_string(r) + ".csv", os.str());
            }
            o.t_clock = seconds_since(t0);
        }
        if (want_lbm) {
            t0 = Clock::now();
            LbmOptions lo;
            lo.scale = j;
            lo.dt = dt;
            lo.initial_horizon = cfg.T;
            lo.horizon_cap = cfg.horizon_cap;
            lo.clock = cfg.clock_options();
            const auto times = uniform_times(cfg.lbm_T, static_cast<std::size_t>(cfg.lbm_points));
            for (long k = 0; k < cfg.lbm_trajectories; ++k) {
                const std::uint64_t index = r * static_cast<std::uint64_t>(cfg.lbm_trajectories) + static_cast<std::uint64_t>(k);
                const LbmTrajectory tr = sample_lbm(f, x, times, cfg.seed, (std::uint64_t{1} << 40) + index, lo);
                Json line{{"replica", r},
                          {"trajectory", k},
                          {"points", tr.t.size()},
                          {"exited", tr.exited},
                          {"beta", tr.clock.beta},
                          {"s_final", tr.s.back()},
                          {"x_final", tr.pos.back().x()},
                          {"y_final", tr.pos.back().y()}};
                o.lbm_lines += line.dump() + "\n";
                if (r < kTraceReplicas) {
                    std::ostringstream os;
                    write_lbm_csv(os, tr);
                    files.write("lbm/lbm_r" + std::to_string(r) + "_" + std::to_string(k) + ".csv", os.str());
                }
            }
            o.t_lbm = seconds_since(t0);
        }
        return o;
    });
    {
        std::string fr = "replica,j,eps,sigma2_mean,mean,var,min,max\n", mr = "replica,kind,scale,beta,total,negative_cells\n",
                    cr = "replica,beta,F_raw,F_der,F_der_untrunc,exited\n", lr;
        double tf = 0, tm = 0, tc = 0, tl = 0;
        for (const auto& o : per) {
            fr += o.field_rows;
            mr += o.measure_rows;
            cr += o.clock_rows;
            lr += o.lbm_lines;
            tf += o.t_field;
            tm += o.t_measure;
            tc += o.t_clock;
            tl += o.t_lbm;
        }
        if (want_field) files.write("fields.csv", fr);
        if (want_measure) files.write("measures.csv", mr);
        if (want_clock) files.write("clocks.csv", cr);
        if (want_lbm) files.write("lbm.jsonl", lr);
        if (!cfg.stages.empty()) man.timings["field"] = tf;
        if (want_measure) man.timings["measure"] = tm;
        if (want_clock) man.timings["clock"] = tc;
        if (want_lbm) man.timings["lbm"] = tl;
        man.timings["replica_stages_wall"] = seconds_since(t_stages);
        log("replica stages done: " + std::to_string(R) + " replicas");
    }

    // ---- estimators
    std::vector<Record> records;
    const auto fetch = [&](std::size_t r) { return source.field(r); };
    const Rect window = cfg.grid_spec().extent();
    std::optional<FieldLadder> first;
    auto replica0 = [&]() -> const FieldLadder& {
        if (!first) first = source.field(0);
        return *first;
    };
    for (const auto& name : cfg.estimators) {
        const auto t0 = Clock::now();
        if (name == "spectrum") {
            SpectrumAccumulator acc(cfg.spectrum_q, cfg.spectrum_levels);
            acc.configure(replica0().grid);
            auto rows = parallel_map(R, threads, [&](std::size_t r) {
                const FieldLadder f = source.field(r);
                return acc.compute_row(source.measure(f, "truncated"));
            });
            for (auto& row : rows) acc.add_row(std::move(row));
            Record rec = to_record(acc.finish());
            rec.inputs["beta"] = cfg.beta;
            rec.inputs["scale"] = j;
            records.push_back(std::move(rec));
        } else if (name == "seneta_heyde") {
            records.push_back(to_record(seneta_heyde_measure_ratio(fetch, R, window, threads), "seneta_heyde"));
        } else if (name == "martingale") {
            records.push_back(to_record(derivative_martingale_test(fetch, R, window, threads), "derivative_martingale"));
        } else if (name == "envelope") {
            EnvelopeOptions eo;
            eo.chi = cfg.envelope_chi;
            eo.R = cfg.envelope_R;
            eo.points = static_cast<std::size_t>(cfg.envelope_points);
            eo.seed = cfg.seed;
            records.push_back(to_record(bessel_envelope(replica0(), source.measure(replica0(), "truncated"), eo)));
        } else if (name == "modulus") {
            ModulusOptions mo;
            mo.exponent = cfg.modulus_gamma;
            mo.points = static_cast<std::size_t>(cfg.modulus_points);
            mo.seed = cfg.seed;
            records.push_back(to_record(modulus_profile(source.measure(replica0(), "truncated"), mo)));
        } else if (name == "resolvent") {
            WalkOptions wo;
            wo.scale = j;
            wo.beta = cfg.beta;
            wo.dt = dt;
            wo.horizon_cap = cfg.horizon_cap;
            wo.seed = cfg.seed;
            wo.threads = threads;
            const auto est = resolvent_estimate(replica0(), [](const Point&) { return 1.0; }, x, cfg.resolvent_lambda,
                                                static_cast<std::size_t>(cfg.resolvent_N), wo);
            Record rec = to_record(est);
            Json target = Json::array();
            bool ok = true;
            for (std::size_t i = 0; i < est.lambda.size(); ++i) {
                target.push_back(1.0 / est.lambda[i]);
                ok = ok && std::abs(est.lambda[i] * est.estimate[i] - 1.0) <= 3.0 * est.lambda[i] * est.se[i] + 1e-8;
            }
            rec.inputs["f"] = "1";
            rec.target = target;
            rec.verdict = ok ? "PASS" : "FAIL";
            records.push_back(std::move(rec));
        } else if (name == "invariance") {
            if (replica0().grid.boundary != Boundary::Periodic)
                throw ConfigError("estimators: invariance requires grid.periodic = true");
            InvarianceOptions io;
            io.t = cfg.invariance_t;
            io.N = static_cast<std::size_t>(cfg.invariance_N);
            io.bootstrap = static_cast<std::size_t>(cfg.invariance_bootstrap);
            io.walk.scale = j;
            io.walk.beta = cfg.beta;
            io.walk.dt = dt;
            io.walk.horizon_cap = cfg.horizon_cap;
            io.walk.seed = cfg.seed;
            io.walk.threads = threads;
            records.push_back(to_record(invariance_test(replica0(), io)));
        }
        man.timings["estimator:" + name] = seconds_since(t0);
        log("estimator done: " + name);
    }
    if (!cfg.estimators.empty()) {
        std::ostringstream os;
        write_jsonl(os, records);
        files.write("results.jsonl", os.str());
    }

    man.outputs = files.hashes();
    man.cache_hits = source.hits();
    Json h;
    h["config_hash"] = man.config_hash;
    h["version"] = man.version;
    h["seed"] = man.seed;
    h["task_seeds"] = man.task_seeds;
    h["outputs"] = man.outputs;
    man.manifest_hash = hex64(fnv1a64(h.dump()));
    std::ofstream(out / "manifest.json") << man.to_json().dump(2) << '\n';
    return man;
}

}  // namespace clqg
