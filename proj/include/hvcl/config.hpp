#pragma once

#include "hvcl/data.hpp"
#include "hvcl/harness.hpp"
#include "hvcl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hvcl {

/// Everything a run needs. Built from flat `section.key = value` text.
struct RunConfig {
    Scenario scenario = Scenario::split;
    Architecture arch;
    TrainConfig train;
    std::vector<std::uint64_t> seeds{1};

    std::filesystem::path data_dir = "data/mnist";
    std::filesystem::path out_dir = "runs/latest";
    std::size_t train_limit = 0; // rows kept per task (0 = all)
    std::size_t test_limit = 0;
    std::vector<ClassPair> split_pairs = default_split_pairs();
    std::size_t permuted_tasks = 10;
    std::uint64_t permutation_seed = 0; // 0: follow the run seed
    std::size_t synthetic_tasks = 2;
    std::size_t synthetic_per_task = 500;
    double synthetic_separation = 10.0;

    /// Throws ConfigError on any inconsistency.
    void validate() const;
};

/// Ordered key/value text of a configuration, one entry per known key.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Every accepted key with its current value, in canonical order.
ConfigEntries config_entries(const RunConfig& config);

/// Sets one key; short names resolve when they match exactly one key suffix
/// (`epochs` -> `train.epochs`). Throws ConfigError for unknown keys or bad values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Parses `key = value` lines; `#` starts a comment and `[section]` prefixes
/// the following keys with `section.`.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "<text>");

RunConfig load_config(const std::filesystem::path& path);

/// Applies a `key=value` override.
void apply_override(RunConfig& config, const std::string& assignment);

/// Canonical text form; parsing it back reproduces the configuration.
std::string config_to_text(const RunConfig& config);

/// Builds the configured task stream, reading dataset files when the scenario needs them.
TaskStream build_stream(const RunConfig& config, std::uint64_t seed);

} // namespace hvcl
