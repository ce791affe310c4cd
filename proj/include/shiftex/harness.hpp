#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "shiftex/aggregator.hpp"
#include "shiftex/model.hpp"
#include "shiftex/stream.hpp"

namespace shiftex {

enum class MethodKind { shiftex, fedavg_global, fedprox_global };

std::string to_string(MethodKind kind);
MethodKind method_from_string(const std::string& name);

struct MethodSpec {
    MethodKind kind = MethodKind::shiftex;
    TrainConfig train;
    Thresholds thresholds;   // shiftex only

    void validate() const;
};

/// Rounds until recovery, or nothing when the horizon passed first.
struct RecoveryTime {
    std::optional<std::size_t> rounds;
    std::size_t horizon = 0;

    std::string str() const;   // "3" or ">15"
    /// Ordering key: a missed recovery sorts after every finite count.
    std::size_t rank() const { return rounds ? *rounds : horizon + 1; }
};

double accuracy_drop(double pre_shift_acc, std::span<const double> post_shift_series);
RecoveryTime recovery_time(double pre_shift_acc, std::span<const double> post_shift_series, std::size_t horizon);
double max_accuracy(std::span<const double> series);

struct WindowMetrics {
    int window_index = 0;
    double accuracy_drop = 0.0;
    RecoveryTime recovery;
    double max_accuracy = 0.0;
    std::vector<double> per_round_accuracy;
};

/// Correct predictions over all test samples, in percent. Equals the
/// sample-count-weighted mean of per-party accuracies.
double aggregate_accuracy(std::span<const std::size_t> correct, std::span<const std::size_t> totals);

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::size_t parties = 40;
    std::size_t feature_dim = 8;
    std::size_t classes = 4;
    std::size_t hidden_dim = 16;
    double class_radius = 1.2;
    double class_std = 1.0;
    WindowSpec window = WindowSpec::tumbling(300);
    std::size_t windows = 5;
    double test_fraction = 0.2;
    ShiftSchedule schedule;
    std::vector<MethodSpec> methods;

    // Thresholds left unset are calibrated from the bootstrap null reports;
    // epsilon_match defaults to the calibrated delta_cov.
    std::optional<double> delta_cov;
    std::optional<double> delta_label;
    std::optional<double> epsilon_match;
    double p_value = 0.05;

    std::size_t rounds_per_window = 15;
    std::size_t bootstrap_rounds = 30;
    std::size_t m_profile = 64;
    std::size_t m_signature = 256;
    std::size_t k_max = 8;
    std::size_t null_reports_per_party = 3;
    KernelSpec kernel = KernelSpec::median();
    // Detection and signatures use the bootstrap encoder so that profiles
    // from parties on different experts stay comparable.
    bool frozen_encoder = true;

    void validate() const;
    ModelShape shape() const { return {feature_dim, hidden_dim, classes}; }
};

/// The default desk-scale experiment: alternating covariate and label events.
ShiftSchedule default_schedule(std::size_t feature_dim);
ExperimentConfig default_experiment();

struct RoundRecord {
    int window = 0;
    std::size_t round = 0;
    double accuracy = 0.0;
    std::size_t experts_active = 1;
};

struct WindowEvents {
    int window = 0;
    std::size_t shifted = 0;
    std::size_t groups = 0;
    std::size_t created = 0;
    std::size_t merged = 0;
    std::size_t finetuned = 0;
    std::size_t experts = 1;
};

struct MethodRun {
    MethodSpec method;
    std::vector<RoundRecord> rounds;      // window 0 holds the bootstrap rounds
    std::vector<WindowMetrics> windows;   // windows 1..W-1
    std::vector<WindowEvents> events;     // shiftex only
    std::vector<nlohmann::json> snapshots;
    CalibratedThresholds calibrated;
    std::vector<PartyReport> null_reports;
};

struct RunLog {
    std::uint64_t seed = 0;
    std::vector<MethodRun> methods;
};

/// Per-party train/test data for every window, shared by all methods.
struct ExperimentData {
    std::vector<std::vector<Dataset>> train;   // [window][party]
    std::vector<std::vector<Dataset>> test;
    std::vector<std::vector<PartyRegime>> regimes;
};

ExperimentData generate_data(const ExperimentConfig& config);

RunLog run_experiment(const ExperimentConfig& config);

struct Calibration {
    CalibratedThresholds thresholds;
    std::vector<PartyReport> null_reports;
};

/// Bootstraps on window 0 and calibrates the detection thresholds only.
Calibration calibrate_experiment(const ExperimentConfig& config);

std::string metrics_csv(const RunLog& log);
std::string summary_csv(const RunLog& log);

/// Writes metrics.csv, summary.csv and registry_w{t}.json; returns the paths.
std::vector<std::filesystem::path> write_run(const RunLog& log, const std::filesystem::path& out_dir);

} // namespace shiftex
