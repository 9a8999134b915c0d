#pragma once

#include "clqg/config.hpp"
#include "clqg/records.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace clqg {

struct RunOptions {
    /// Field cache directory; empty disables caching. default_run_options()
    /// takes it from the CLQG_CACHE_DIR environment variable.
    std::filesystem::path cache_dir;
    std::optional<int> threads;  ///< overrides the config thread count
    std::ostream* log = nullptr;
};

RunOptions default_run_options();

struct RunManifest {
    std::string config_hash;
    std::string version;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> task_seeds;    ///< task -> derived stream key (hex)
    std::map<std::string, std::string> outputs;       ///< file (relative to the output dir) -> content hash
    std::map<std::string, double> timings;            ///< stage -> wall seconds (not hashed)
    std::size_t cache_hits = 0;                       ///< not hashed
    std::string manifest_hash;                        ///< over everything except timings and cache hits

    Json to_json() const;
};

/// Executes the configured stages (field -> measure -> clock -> lbm ->
/// estimators) and writes outputs plus manifest.json into cfg.output.
/// Output bytes depend only on the config (including the seed), not on the
/// thread count.
RunManifest run(const ExperimentConfig& cfg, const RunOptions& options = default_run_options());

/// Cache key of one field replica (hash of the field-relevant config block).
std::string field_cache_key(const ExperimentConfig& cfg, std::uint64_t replica);

}  // namespace clqg
