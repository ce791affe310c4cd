#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "shiftex/model.hpp"
#include "shiftex/numerics.hpp"
#include "shiftex/random.hpp"
#include "shiftex/stream.hpp"

namespace shiftex {

/// What a party discloses about its input distribution: the mean embedding
/// of its window plus a bounded seeded subsample for kernel comparisons.
struct LatentProfile {
    std::vector<double> mean;
    EmbeddingSet sample;
    std::size_t n_source = 0;
};

/// Per-window statistics a party sends to the aggregator. Holds embeddings,
/// a label histogram and two scalars; never raw features or labels.
struct PartyReport {
    int party_id = 0;
    int window_index = 0;
    LatentProfile profile;
    LabelHistogram label_hist;
    double delta_cov = 0.0;
    double delta_label = 0.0;
};

/// Embeds every sample, records the full mean, then keeps a seeded
/// subsample of at most m_profile embeddings.
LatentProfile build_profile(const ModelParams& params, const Dataset& data, std::size_t m_profile, Rng& rng);

struct PreviousWindow {
    LatentProfile profile;
    LabelHistogram label_hist;
};

/// Party-side shift detection for one window. With no previous window both
/// scores are zero; otherwise delta_cov is MMD² between the profile samples
/// and delta_label the JSD between label histograms.
PartyReport detect_shift(int party_id, int window_index, const std::optional<PreviousWindow>& prev,
                         const Dataset& cur_data, const ModelParams& params, const KernelSpec& kernel,
                         std::size_t m_profile, Rng& rng);

nlohmann::json report_to_json(const PartyReport& report);
PartyReport report_from_json(const nlohmann::json& j);

} // namespace shiftex
