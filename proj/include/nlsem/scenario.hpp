#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nlsem {

using json = nlohmann::json;

struct ScenarioInfo {
    std::string id;
    std::string summary;
    std::string probes; ///< the theoretical statement the scenario exercises
};

const std::vector<ScenarioInfo>& scenario_registry();
/// Throws ConfigError for unknown ids.
const ScenarioInfo& scenario_info(const std::string& id);

struct RunOptions {
    std::filesystem::path out_dir = "results";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> steps;
    bool dump_paths = false;
    std::size_t threads = 0; ///< 0 = NLSEM_THREADS or hardware concurrency
};

struct Criterion {
    std::string name;
    bool pass = false;
    double observed = 0.0;
    double threshold = 0.0;
    std::string rule; ///< how observed is compared with threshold
};

struct RunRecord {
    std::string scenario;
    std::string config_hash;
    json results;    ///< contents of results.json
    bool pass = false;
    double wall_time_s = 0.0;
};

/// A validated configuration, ready to run. Building one has no side effects.
class PreparedScenario {
public:
    const std::string& id() const noexcept { return id_; }
    const json& effective_config() const noexcept { return config_; }
    const std::string& config_hash() const noexcept { return hash_; }

    struct Output; ///< collected by the scenario body

private:
    friend PreparedScenario prepare_scenario(const json& config, const RunOptions& options);
    friend RunRecord run_prepared(const PreparedScenario& scenario, const RunOptions& options);
    std::string id_;
    json config_;
    std::string hash_;
    std::function<void(Output&)> body_;
};

/// Reads a JSON file; syntax errors become ConfigError.
json load_config(const std::filesystem::path& file);

/// Applies the --seed/--paths/--steps overrides and validates every field.
/// Throws ConfigError on any schema violation.
PreparedScenario prepare_scenario(const json& config, const RunOptions& options);

/// Runs the scenario and writes results.json plus CSV tables to options.out_dir.
RunRecord run_prepared(const PreparedScenario& scenario, const RunOptions& options);

RunRecord run_scenario(const json& config, const RunOptions& options);

/// results.json without the wall-time field, for reproducibility comparisons.
std::string canonical_results(const json& results);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& text);

} // namespace nlsem
