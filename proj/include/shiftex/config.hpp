#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "shiftex/harness.hpp"

namespace shiftex {

struct RunConfig {
    ExperimentConfig experiment = default_experiment();
    std::filesystem::path out_dir = "out";
};

/// Builds a RunConfig from a JSON document. Missing keys keep their
/// defaults; unknown keys and type errors throw UsageError naming the field.
RunConfig parse_run_config(const nlohmann::json& doc);

/// Full JSON form of a config; parse_run_config(run_config_to_json(c)) == c.
nlohmann::json run_config_to_json(const RunConfig& config);

/// Applies "a.b.c=value" to the document. The value is parsed as JSON when
/// possible and kept as a string otherwise; for array-valued keys a plain
/// value is split on commas.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads, overrides and parses a config file. Missing files and JSON syntax
/// errors throw UsageError with the file name and position.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

} // namespace shiftex
