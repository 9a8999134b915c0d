// Command-line front end: each subcommand maps flags onto an ExperimentConfig and runs it.

#include "clqg/config.hpp"
#include "clqg/kernels.hpp"
#include "clqg/records.hpp"
#include "clqg/runner.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace clqg;

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
    std::optional<int> threads;
    std::optional<long> replicas;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "Key-value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.sets, "Override one key: key=value (repeatable)");
    cmd->add_option("--seed", c.seed, "Master seed");
    cmd->add_option("-o,--output", c.output, "Output directory");
    cmd->add_option("-j,--threads", c.threads, "Worker threads");
    cmd->add_option("-n,--replicas", c.replicas, "Field replicas");
}

ExperimentConfig build_config(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) set_config_value(cfg, "seed", std::to_string(*c.seed));
    if (c.output) cfg.output = *c.output;
    if (c.threads) cfg.threads = *c.threads;
    if (c.replicas) cfg.replicas = *c.replicas;
    return cfg;
}

void print_results(const ExperimentConfig& cfg) {
    std::ifstream is(std::filesystem::path(cfg.output) / "results.jsonl");
    std::cout << is.rdbuf();
}

RunManifest execute(ExperimentConfig& cfg) {
    cfg.validate();
    RunOptions opt = default_run_options();
    opt.log = &std::cerr;
    RunManifest man = run(cfg, opt);
    std::cerr << "manifest " << man.manifest_hash << " -> " << (std::filesystem::path(cfg.output) / "manifest.json").string()
              << '\n';
    return man;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Critical Liouville quantum gravity simulations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", CLQG_VERSION);

    Common common;

    auto* field = app.add_subcommand("field", "Sample field ladders");
    add_common(field, common);
    bool check_assumptions = false;
    field->add_flag("--check-assumptions", check_assumptions, "Print the kernel assumption diagnostics CSV and exit");

    auto* measure = app.add_subcommand("measure", "Build measures from field ladders");
    add_common(measure, common);
    std::vector<std::string> kinds;
    measure->add_option("--kind", kinds, "truncated | seneta_heyde | derivative");
    std::optional<double> beta;
    measure->add_option("--beta", beta, "Barrier height of the truncated measure");

    auto* clock = app.add_subcommand("clock", "Derivative clock along Brownian paths");
    add_common(clock, common);
    std::optional<double> T;
    clock->add_option("--T", T, "Brownian horizon");

    auto* lbm = app.add_subcommand("lbm", "Sample Liouville Brownian motion trajectories");
    add_common(lbm, common);
    std::optional<double> lbm_T;
    lbm->add_option("--T", lbm_T, "Liouville time horizon");

    auto* spectrum = app.add_subcommand("spectrum", "Multifractal spectrum fit");
    add_common(spectrum, common);
    std::vector<double> qs;
    spectrum->add_option("--q", qs, "Moment orders in (0, 1)")->delimiter(',');

    auto* envelope = app.add_subcommand("envelope", "Thick-point envelope coverage");
    add_common(envelope, common);

    auto* resolvent = app.add_subcommand("resolvent", "Resolvent of f = 1");
    add_common(resolvent, common);
    std::vector<double> lambdas;
    resolvent->add_option("--lambda", lambdas, "Resolvent parameters")->delimiter(',');

    auto* invariance = app.add_subcommand("invariance", "Invariance test of the derivative measure");
    add_common(invariance, common);
    std::optional<double> inv_t;
    invariance->add_option("--t", inv_t, "Liouville time");

    auto* run_cmd = app.add_subcommand("run", "Run every stage and estimator named in the config");
    add_common(run_cmd, common);

    auto* report = app.add_subcommand("report", "Collate *.jsonl records into a verdict table");
    std::string report_dir = ".";
    report->add_option("dir,--dir", report_dir, "Directory holding results");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (report->parsed()) {
            std::cout << verdict_table(collect_records(report_dir));
            return 0;
        }
        ExperimentConfig cfg = build_config(common);
        if (field->parsed()) {
            if (check_assumptions) {
                const Rect window = cfg.grid_spec().extent();
                std::cout << diagnostics_csv(assumption_report(cfg.kernel_spec(), window, cfg.ladder().eps));
                return 0;
            }
            cfg.stages = {"field"};
            cfg.estimators.clear();
            execute(cfg);
        } else if (measure->parsed()) {
            cfg.stages = {"field", "measure"};
            cfg.estimators.clear();
            if (!kinds.empty()) cfg.measure_kinds = kinds;
            if (beta) cfg.beta = *beta;
            execute(cfg);
        } else if (clock->parsed()) {
            cfg.stages = {"clock"};
            cfg.estimators.clear();
            if (T) cfg.T = *T;
            execute(cfg);
        } else if (lbm->parsed()) {
            cfg.stages = {"lbm"};
            cfg.estimators.clear();
            if (lbm_T) cfg.lbm_T = *lbm_T;
            execute(cfg);
        } else if (spectrum->parsed()) {
            cfg.stages.clear();
            cfg.estimators = {"spectrum"};
            if (!qs.empty()) cfg.spectrum_q = qs;
            execute(cfg);
            print_results(cfg);
        } else if (envelope->parsed()) {
            cfg.stages.clear();
            cfg.estimators = {"envelope"};
            execute(cfg);
            print_results(cfg);
        } else if (resolvent->parsed()) {
            cfg.stages.clear();
            cfg.estimators = {"resolvent"};
            if (!lambdas.empty()) cfg.resolvent_lambda = lambdas;
            execute(cfg);
            print_results(cfg);
        } else if (invariance->parsed()) {
            cfg.stages.clear();
            cfg.estimators = {"invariance"};
            if (inv_t) cfg.invariance_t = *inv_t;
            execute(cfg);
            print_results(cfg);
        } else if (run_cmd->parsed()) {
            execute(cfg);
            if (!cfg.estimators.empty()) print_results(cfg);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return 2;
    } catch (const ResourceError& e) {
        std::cerr << "resource cap: " << e.what() << '\n';
        return 4;
    } catch (const SynthesisError& e) {
        std::cerr << "synthesis failed: " << e.what() << '\n';
        return 3;
    } catch (const HorizonError& e) {
        std::cerr << "horizon: " << e.what() << '\n';
        return 3;
    } catch (const ChecksumError& e) {
        std::cerr << "checksum: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
