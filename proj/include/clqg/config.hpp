#pragma once

#include "clqg/clock.hpp"
#include "clqg/field_synth.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace clqg {

/// Raw key -> value pairs with the line each key came from.
struct KeyValues {
    std::map<std::string, std::string> values;
    std::map<std::string, int> lines;
};

/// Parses "key = value" lines; '#' starts a comment. Duplicate keys and
/// malformed lines raise ConfigError naming the line.
KeyValues parse_key_values(std::string_view text);

struct ExperimentConfig {
    // kernel
    std::string kernel = "mff";
    double kernel_mass = 1.0;
    std::vector<double> kernel_domain{0.0, 0.0, 1.0, 1.0};
    // grid and ladder
    long nx = 256, ny = 0;  ///< ny = 0: square
    double x0 = 0.0, y0 = 0.0, dx = 0.0;  ///< dx = 0: window side 1
    bool periodic = false;
    int depth = 8;
    int padding = 2, max_padding = 4;
    double clip_tolerance = 0.05;
    // run
    std::uint64_t seed = 0;
    bool seed_set = false;
    long replicas = 1;
    int threads = 1;
    std::string output = "clqg-out";
    std::vector<std::string> stages{"field", "measure"};
    std::vector<std::string> estimators;
    // measure
    std::vector<std::string> measure_kinds{"truncated"};
    double beta = 15.0;
    int scale = -1;
    // path / clock
    double dt = 0.0;  ///< 0: dx^2/4
    double T = 1.0;
    double horizon_cap = 1024.0;
    std::vector<double> start;  ///< empty: window centre
    std::string normalization = "exact";
    bool escalate_beta = true;
    // lbm
    double lbm_T = 1.0;
    long lbm_points = 100;
    long lbm_trajectories = 1;
    // estimators
    std::vector<double> spectrum_q{0.2, 0.5, 0.8};
    std::vector<int> spectrum_levels;
    double envelope_chi = 0.1;
    long envelope_points = 2000;
    std::vector<double> envelope_R{2.0, 4.0, 8.0, 16.0};
    double modulus_gamma = 0.4;
    long modulus_points = 1000;
    std::vector<double> resolvent_lambda{1.0};
    long resolvent_N = 1000;
    double invariance_t = 0.05;
    long invariance_N = 1000;
    long invariance_bootstrap = 1000;

    KernelSpec kernel_spec() const;
    GridSpec grid_spec() const;
    ScaleLadder ladder() const;
    SynthesisOptions synthesis_options() const;
    ClockOptions clock_options() const;
    double path_dt() const;
    Point start_point() const;
    int resolved_scale() const { return scale < 0 ? depth : scale; }

    /// Cross-field checks (dt <= dx^2, J <= log2 nx, ...); throws ConfigError.
    void validate() const;
};

/// Typed conversion; unknown keys and bad values raise ConfigError naming the key.
/// Cross-field checks are left to validate(), so overrides can be applied first.
ExperimentConfig config_from_key_values(const KeyValues& kv);
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& file);

/// Sets one key from text, as if it appeared in the file.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Every key except threads and output with its resolved value, sorted by key.
std::string canonical_config(const ExperimentConfig& cfg);
/// Hash of canonical_config.
std::string config_hash(const ExperimentConfig& cfg);

/// Documented schema: key, type, default.
struct ConfigKey {
    std::string key, type, default_value, help;
};
const std::vector<ConfigKey>& config_schema();

}  // namespace clqg
