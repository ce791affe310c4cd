#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "shiftex/numerics.hpp"
#include "shiftex/random.hpp"

namespace shiftex {

/// Labeled samples, features stored row-major.
struct Dataset {
    std::size_t dim = 0;
    std::vector<double> features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
    std::span<double> row(std::size_t i) { return {features.data() + i * dim, dim}; }

    void push_back(std::span<const double> x, int y);
    Dataset subset(std::span<const std::size_t> idx) const;
    EmbeddingSet feature_set() const { return EmbeddingSet(dim, features); }
};

/// Seeded shuffle split; the first part holds ceil((1 - test_fraction) * n) rows.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction, Rng& rng);

// ---------------------------------------------------------------------------
// Windows

enum class WindowMode { tumbling, sliding };

struct WindowSpec {
    WindowMode mode = WindowMode::tumbling;
    std::size_t length = 1;
    std::size_t stride = 1;

    static WindowSpec tumbling(std::size_t length);
    static WindowSpec sliding(std::size_t length, std::size_t stride);
    void validate() const;
};

struct WindowRange {
    std::size_t start = 0;
    std::size_t end = 0;
    friend bool operator==(const WindowRange&, const WindowRange&) = default;
};

/// Index ranges of complete windows over a stream of n samples. The trailing
/// partial window is dropped; n < length yields no windows.
std::vector<WindowRange> make_windows(std::size_t n_samples, const WindowSpec& spec);

// ---------------------------------------------------------------------------
// Covariate transforms

struct TransformStep {
    enum class Kind { identity, rotation, scale, shift, gaussian_noise };
    Kind kind = Kind::identity;
    double value = 0.0;           // angle, factor or sigma
    std::vector<double> offset;   // shift only

    static TransformStep identity() { return {}; }
    static TransformStep rotation(double angle) { return {Kind::rotation, angle, {}}; }
    static TransformStep scale(double factor);
    static TransformStep shift(std::vector<double> offset) { return {Kind::shift, 0.0, std::move(offset)}; }
    static TransformStep gaussian_noise(double sigma);

    friend bool operator==(const TransformStep&, const TransformStep&) = default;
};

/// Ordered composition of feature-space transforms. Rotations act on each
/// consecutive coordinate pair (0,1), (2,3), ...; an odd trailing coordinate
/// is left unchanged.
struct CovariateTransform {
    std::vector<TransformStep> steps;

    bool is_identity() const;
    void apply(std::span<double> x, Rng& noise_rng) const;

    friend bool operator==(const CovariateTransform&, const CovariateTransform&) = default;
};

// ---------------------------------------------------------------------------
// Shift schedules

struct ShiftEvent {
    int window_index = 0;
    double affected_fraction = 0.0;
    std::optional<CovariateTransform> covariate;
    std::optional<double> label_dirichlet_alpha;
};

struct ShiftSchedule {
    std::vector<ShiftEvent> events;
    int horizon = 1;

    void validate() const;
    bool has_event_at(int window) const;
};

/// What a party's generator currently looks like. `label_window` records the
/// window whose event drew the party's skewed prior, which keeps the prior
/// fixed until another label event overrides it.
struct PartyRegime {
    CovariateTransform transform;
    std::optional<double> label_alpha;
    int label_window = -1;

    friend bool operator==(const PartyRegime&, const PartyRegime&) = default;
};

/// Applies every event scheduled at `window_index`. Each event reassigns
/// floor(fraction * n) parties chosen by seeded sampling without replacement;
/// everyone else keeps their current regime.
std::vector<PartyRegime> apply_schedule(std::span<const PartyRegime> current, const ShiftSchedule& schedule,
                                        int window_index, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic party streams

/// Class-conditional isotropic Gaussian mixture.
struct ClassConditionalGaussian {
    std::vector<std::vector<double>> class_means;
    double std_dev = 1.0;
    LabelHistogram prior;

    std::size_t dim() const { return class_means.empty() ? 0 : class_means.front().size(); }
    std::size_t classes() const { return class_means.size(); }
    void validate() const;
};

/// Class means placed at angle 2*pi*c/C and the given radius in every
/// coordinate pair, so a rotation by 2*pi/C permutes the classes.
ClassConditionalGaussian symmetric_mixture(std::size_t dim, std::size_t classes, double radius, double std_dev);

struct PartyStream {
    int party_id = 0;
    ClassConditionalGaussian base;
    std::uint64_t seed = 0;
};

/// Symmetric Dirichlet(alpha) draw over `classes` entries.
LabelHistogram dirichlet_histogram(std::size_t classes, double alpha, Rng& rng);

/// The class prior a party samples from under `regime`.
LabelHistogram active_prior(const PartyStream& stream, const PartyRegime& regime);

/// Draws n samples: labels from the active prior, features from the
/// class-conditional Gaussian, then the covariate transform on features only.
Dataset sample_window(const PartyStream& stream, int window_index, const PartyRegime& regime, std::size_t n,
                      Rng& rng);

/// The generator's RNG for (party, window); independent of call order.
Rng window_rng(const PartyStream& stream, int window_index);

} // namespace shiftex
