#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace shiftex {

inline constexpr int exit_ok = 0;
inline constexpr int exit_runtime = 1;
inline constexpr int exit_usage = 2;

struct CliOptions {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    std::vector<std::string> overrides;
};

/// Runs the configured experiment and writes metrics, summary and registry
/// snapshots into the output directory.
int cmd_run(const CliOptions& options, std::ostream& out, std::ostream& err);

/// Bootstraps only and writes thresholds.json with the calibrated values and
/// null-distribution statistics.
int cmd_calibrate(const CliOptions& options, std::ostream& out, std::ostream& err);

/// Compares the greedy and exact assignment solvers over a corpus (a JSON
/// file or a directory of them) plus `fuzz` generated instances.
int cmd_gap(const std::filesystem::path& corpus, std::size_t fuzz, std::ostream& out, std::ostream& err);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace shiftex
