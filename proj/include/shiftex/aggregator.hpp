#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

#include "shiftex/model.hpp"
#include "shiftex/numerics.hpp"
#include "shiftex/party.hpp"

namespace shiftex {

struct Thresholds {
    double delta_cov = 0.0;
    double delta_label = 0.0;
    double epsilon_match = 0.0;
    double tau_merge = 0.95;
    std::size_t gamma_min_cluster = 3;
    std::optional<std::size_t> u_max;   // nullopt = unbounded
    double lambda_open = 0.5;
    double mu_balance = 0.5;
    double ema_beta = 0.9;
    double participant_fraction = 0.2;

    void validate() const;
};

struct ExpertRecord {
    int expert_id = 0;
    ModelParams params;
    std::vector<double> memory_signature;   // EMA of assigned parties' mean embeddings
    EmbeddingSet signature_sample;          // bounded pooled sample used for matching
    LabelHistogram agg_label_hist;
    int created_window = 0;
};

/// Expert pool plus the party -> expert map. Ids grow monotonically and are
/// never reused.
struct ExpertRegistry {
    std::map<int, ExpertRecord> experts;
    std::map<int, int> assignment;
    int next_id = 0;

    std::size_t load(int expert_id) const;
    std::vector<int> parties_of(int expert_id) const;
    const ExpertRecord& expert_of(int party_id) const;

    /// Throws if any party points at a missing expert or ids are inconsistent.
    void check_invariants(std::optional<std::size_t> u_max = std::nullopt) const;
};

/// Shifted parties summarized for matching: pooled profile sample (capped),
/// sample-weighted mean embedding and label mixture.
struct GroupSummary {
    std::vector<int> parties;
    std::vector<double> mean;
    EmbeddingSet sample;
    LabelHistogram label_hist;
};

GroupSummary summarize_group(std::span<const PartyReport* const> members, std::size_t cap, Rng& rng);

// ---------------------------------------------------------------------------
// Detection and grouping

struct CalibratedThresholds {
    double delta_cov = 0.0;
    double delta_label = 0.0;
};

/// (1 - p_value) nearest-rank quantiles of the null scores.
CalibratedThresholds calibrate_thresholds(std::span<const PartyReport> null_reports, double p_value);

struct Partition {
    std::vector<int> shifted;
    std::vector<int> stable;
};

/// Shifted iff delta_cov > delta_cov threshold or delta_label > delta_label threshold.
Partition partition_shifted(std::span<const PartyReport> reports, const Thresholds& thresholds);

/// K-means over profile means, k by Davies-Bouldin (see choose_clusters).
/// Returns groups of party ids.
std::vector<std::vector<int>> cluster_shifted(std::span<const PartyReport> shifted, std::size_t k_max,
                                              std::uint64_t seed);

/// Closest expert by MMD² to the group sample, if within epsilon. Ties go to
/// the lowest id.
std::optional<int> match_expert(const EmbeddingSet& group_sample, const ExpertRegistry& registry, double epsilon,
                                const KernelSpec& kernel);

/// EMA update of the memory signature and a seeded reservoir merge of the
/// signature sample capped at m_signature rows.
ExpertRecord update_latent_memory(const ExpertRecord& expert, std::span<const double> group_mean,
                                  const EmbeddingSet& group_sample, double ema_beta, std::size_t m_signature,
                                  Rng& rng);

/// Label-balanced cohort: clusters parties by label histogram (k <= 5) and
/// draws round-robin across clusters until ceil(fraction * n) are chosen.
/// Returns party ids in ascending order.
std::vector<int> flips_select(std::span<const std::pair<int, LabelHistogram>> group, double fraction,
                              std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training and lifecycle

/// One federated round: every cohort member trains from `global`, results are
/// averaged with sample-count weights in party-id order.
ModelParams federated_round(const ModelParams& global, std::span<const int> cohort,
                            std::span<const Dataset> datasets, const TrainConfig& cfg, std::uint64_t seed);

ExpertRecord train_expert(const ExpertRecord& expert, std::span<const int> cohort, std::span<const Dataset> datasets,
                          const TrainConfig& cfg, std::size_t rounds, std::uint64_t seed);

/// Adds an expert cloned from `base` whose memory is the group's summary and
/// reassigns the group's parties to it (at most u_max of them, in id order).
std::pair<ExpertRegistry, int> create_expert(const ExpertRegistry& registry, const ModelParams& base,
                                             const GroupSummary& group, int window,
                                             std::optional<std::size_t> u_max = std::nullopt);

/// Each party fine-tunes its assigned expert on its own data. The results
/// stay with the parties; the registry is not touched.
std::map<int, ModelParams> signal_local_finetune(std::span<const int> group, const ExpertRegistry& registry,
                                                 std::span<const Dataset> datasets, const TrainConfig& cfg,
                                                 std::uint64_t seed);

struct MergeEvent {
    int kept = 0;
    int removed = 0;
    double cosine = 0.0;
};

/// Repeatedly merges the most similar pair (cosine of flat parameters above
/// tau) into the lower id, weighting by assigned-party counts.
ExpertRegistry consolidate_experts(const ExpertRegistry& registry, double tau_merge,
                                   std::optional<std::size_t> u_max = std::nullopt,
                                   std::vector<MergeEvent>* log = nullptr, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Window driver

struct AggregatorOptions {
    std::size_t rounds = 15;
    std::size_t m_signature = 256;
    std::size_t k_max = 8;
    KernelSpec kernel = KernelSpec::median();
    std::uint64_t seed = 0;
};

struct AggregatorState {
    ModelParams theta0;
    ExpertRegistry registry;
    std::map<int, ModelParams> personalized;   // local fine-tunes from the latest window
};

struct WindowOutcome {
    Partition partition;
    std::vector<std::vector<int>> groups;
    std::vector<int> created;
    std::map<int, std::vector<int>> matched;   // expert id -> parties rerouted to it
    std::vector<int> finetuned;
    std::vector<MergeEvent> merges;
};

using RoundCallback = std::function<void(std::size_t round, const AggregatorState&)>;

/// One window of the aggregator loop: partition, cluster, match or create,
/// small-group fine-tuning, `rounds` federated rounds (calling on_round after
/// each), consolidation and latent-memory updates. Reports and datasets are
/// indexed by party id.
WindowOutcome run_window(AggregatorState& state, std::span<const PartyReport> reports,
                         std::span<const Dataset> datasets, const Thresholds& thresholds, const TrainConfig& cfg,
                         const AggregatorOptions& options, int window, const RoundCallback& on_round = {});

struct BootstrapOptions {
    std::size_t rounds = 30;
    double participant_fraction = 0.2;
    std::size_t m_profile = 64;
    std::size_t m_signature = 256;
    std::size_t null_reports_per_party = 3;
    KernelSpec kernel = KernelSpec::median();
    std::uint64_t seed = 0;
};

struct BootstrapResult {
    AggregatorState state;
    std::vector<PartyReport> null_reports;
};

/// Trains the initial model with label-balanced cohorts, registers it as
/// expert 0 for every party and collects shift-free reports from random
/// half-splits of each party's data.
BootstrapResult bootstrap(const ModelShape& shape, std::span<const Dataset> datasets, const TrainConfig& cfg,
                          const BootstrapOptions& options, const RoundCallback& on_round = {});

// ---------------------------------------------------------------------------

nlohmann::json registry_snapshot(const ExpertRegistry& registry, int window);

/// Bytes held by the registry's numeric state: per expert its parameters,
/// signature, signature sample and histogram, plus one (party, expert) pair
/// per assignment.
std::size_t registry_footprint_bytes(const ExpertRegistry& registry);

} // namespace shiftex
