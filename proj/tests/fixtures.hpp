#pragma once

#include <numbers>
#include <random>
#include <vector>

#include "shiftex/aggregator.hpp"
#include "shiftex/harness.hpp"
#include "shiftex/stream.hpp"

namespace fixtures {

using namespace shiftex;

/// n draws from an isotropic Gaussian in d dimensions with the given mean in
/// every coordinate; labels cycle through `classes`.
inline Dataset gaussian(std::size_t n, std::size_t d, double mean, Rng& rng, std::size_t classes = 4) {
    std::normal_distribution<double> g(mean, 1.0);
    Dataset out;
    out.dim = d;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(d);
        for (auto& v : x) v = g(rng);
        out.push_back(x, static_cast<int>(i % classes));
    }
    return out;
}

/// The covariate regime used for planted-regime tests: rotation, noise and
/// a constant offset, so P(x) moves visibly.
inline CovariateTransform regime_b(std::size_t dim, double offset = 1.5) {
    return CovariateTransform{{TransformStep::rotation(std::numbers::pi / 2), TransformStep::gaussian_noise(0.5),
                               TransformStep::shift(std::vector<double>(dim, offset))}};
}

/// A single-method ShiftEx experiment whose schedule switches half the parties
/// to regime B at window 1 and, when `recurring`, everyone back to A at window 2.
inline ExperimentConfig planted_experiment(std::uint64_t seed, bool recurring) {
    auto cfg = default_experiment();
    cfg.seed = seed;
    cfg.methods = {cfg.methods.front()};
    ShiftEvent b;
    b.window_index = 1;
    b.affected_fraction = 0.5;
    b.covariate = regime_b(cfg.feature_dim);
    cfg.schedule.events = {b};
    cfg.windows = 2;
    if (recurring) {
        ShiftEvent a;
        a.window_index = 2;
        a.affected_fraction = 1.0;
        a.covariate = CovariateTransform{{TransformStep::identity()}};
        cfg.schedule.events.push_back(a);
        cfg.windows = 3;
    }
    cfg.schedule.horizon = static_cast<int>(cfg.windows);
    return cfg;
}

/// A registry holding clones of `params` under ids 0..k-1, parties spread
/// round-robin.
inline ExpertRegistry clone_registry(const ModelParams& params, std::size_t k, std::size_t parties,
                                     std::size_t dim) {
    ExpertRegistry reg;
    for (std::size_t e = 0; e < k; ++e) {
        ExpertRecord r;
        r.expert_id = static_cast<int>(e);
        r.params = params;
        r.memory_signature.assign(dim, 0.0);
        r.signature_sample = EmbeddingSet::from_rows({std::vector<double>(dim, static_cast<double>(e))});
        r.agg_label_hist = LabelHistogram::uniform(params.shape.classes);
        reg.experts.emplace(r.expert_id, r);
    }
    for (std::size_t p = 0; p < parties; ++p) reg.assignment[static_cast<int>(p)] = static_cast<int>(p % k);
    reg.next_id = static_cast<int>(k);
    return reg;
}

} // namespace fixtures
