#include "shiftex/stream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "shiftex/errors.hpp"

namespace shiftex {

void Dataset::push_back(std::span<const double> x, int y) {
    if (dim == 0) dim = x.size();
    require(x.size() == dim, "Dataset: feature dimension mismatch");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(y);
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.dim = dim;
    out.features.reserve(idx.size() * dim);
    out.labels.reserve(idx.size());
    for (auto i : idx) {
        require(i < size(), "Dataset: index out of range");
        auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(labels[i]);
    }
    return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction, Rng& rng) {
    require(test_fraction >= 0.0 && test_fraction < 1.0, "train_test_split: test fraction must lie in [0, 1)");
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::ceil((1.0 - test_fraction) * static_cast<double>(data.size()) - 1e-9));
    std::span<const std::size_t> all(idx);
    return {data.subset(all.first(n_train)), data.subset(all.subspan(n_train))};
}

// ---------------------------------------------------------------------------

WindowSpec WindowSpec::tumbling(std::size_t length) {
    WindowSpec w{WindowMode::tumbling, length, length};
    w.validate();
    return w;
}

WindowSpec WindowSpec::sliding(std::size_t length, std::size_t stride) {
    WindowSpec w{WindowMode::sliding, length, stride};
    w.validate();
    return w;
}

void WindowSpec::validate() const {
    require(length >= 1, "window length must be >= 1");
    if (mode == WindowMode::tumbling)
        require(stride == length, "tumbling window stride must equal its length");
    else
        require(stride >= 1 && stride <= length, "sliding window stride must lie in [1, length]");
}

std::vector<WindowRange> make_windows(std::size_t n_samples, const WindowSpec& spec) {
    spec.validate();
    std::vector<WindowRange> out;
    for (std::size_t start = 0; start + spec.length <= n_samples; start += spec.stride)
        out.push_back({start, start + spec.length});
    return out;
}

// ---------------------------------------------------------------------------

TransformStep TransformStep::scale(double factor) {
    require(factor != 0.0 && std::isfinite(factor), "scale factor must be nonzero");
    return {Kind::scale, factor, {}};
}

TransformStep TransformStep::gaussian_noise(double sigma) {
    require(sigma >= 0.0, "noise sigma must be >= 0");
    return {Kind::gaussian_noise, sigma, {}};
}

bool CovariateTransform::is_identity() const {
    return std::all_of(steps.begin(), steps.end(), [](const TransformStep& s) {
        return s.kind == TransformStep::Kind::identity ||
               (s.kind == TransformStep::Kind::gaussian_noise && s.value == 0.0) ||
               (s.kind == TransformStep::Kind::rotation && s.value == 0.0) ||
               (s.kind == TransformStep::Kind::scale && s.value == 1.0);
    });
}

void CovariateTransform::apply(std::span<double> x, Rng& noise_rng) const {
    using K = TransformStep::Kind;
    for (const auto& s : steps) {
        switch (s.kind) {
        case K::identity:
            break;
        case K::rotation: {
            const double c = std::cos(s.value), sn = std::sin(s.value);
            for (std::size_t k = 0; k + 1 < x.size(); k += 2) {
                const double a = x[k], b = x[k + 1];
                x[k] = c * a - sn * b;
                x[k + 1] = sn * a + c * b;
            }
            break;
        }
        case K::scale:
            for (auto& v : x) v *= s.value;
            break;
        case K::shift:
            require(s.offset.size() == x.size(), "shift offset dimension mismatch");
            for (std::size_t k = 0; k < x.size(); ++k) x[k] += s.offset[k];
            break;
        case K::gaussian_noise: {
            std::normal_distribution<double> n(0.0, s.value);
            if (s.value > 0.0)
                for (auto& v : x) v += n(noise_rng);
            break;
        }
        }
    }
}

// ---------------------------------------------------------------------------

void ShiftSchedule::validate() const {
    require(horizon >= 1, "schedule horizon must be >= 1");
    int last = -1;
    for (const auto& e : events) {
        require(e.window_index >= 0 && e.window_index < horizon,
                "shift event window " + std::to_string(e.window_index) + " outside horizon");
        require(e.window_index >= last, "shift events must be sorted by window");
        require(e.affected_fraction >= 0.0 && e.affected_fraction <= 1.0, "affected fraction must lie in [0, 1]");
        require(e.covariate.has_value() || e.label_dirichlet_alpha.has_value(),
                "shift event needs a covariate transform or a label alpha");
        if (e.label_dirichlet_alpha) require(*e.label_dirichlet_alpha > 0.0, "label alpha must be positive");
        last = e.window_index;
    }
}

bool ShiftSchedule::has_event_at(int window) const {
    return std::any_of(events.begin(), events.end(), [&](const ShiftEvent& e) { return e.window_index == window; });
}

std::vector<PartyRegime> apply_schedule(std::span<const PartyRegime> current, const ShiftSchedule& schedule,
                                        int window_index, std::uint64_t seed) {
    require(window_index >= 0 && window_index < schedule.horizon, "apply_schedule: window outside horizon");
    std::vector<PartyRegime> next(current.begin(), current.end());
    const std::size_t n = next.size();
    std::uint64_t event_no = 0;
    for (const auto& e : schedule.events) {
        if (e.window_index != window_index) continue;
        auto rng = make_rng({seed, salt(Stream::schedule), static_cast<std::uint64_t>(window_index), event_no++});
        const auto k = static_cast<std::size_t>(std::floor(e.affected_fraction * static_cast<double>(n) + 1e-9));
        std::vector<std::size_t> ids(n);
        std::iota(ids.begin(), ids.end(), 0);
        std::vector<std::size_t> chosen;
        std::sample(ids.begin(), ids.end(), std::back_inserter(chosen), static_cast<std::ptrdiff_t>(k), rng);
        for (auto p : chosen) {
            if (e.covariate) next[p].transform = *e.covariate;
            if (e.label_dirichlet_alpha) {
                next[p].label_alpha = e.label_dirichlet_alpha;
                next[p].label_window = window_index;
            }
        }
    }
    return next;
}

// ---------------------------------------------------------------------------

void ClassConditionalGaussian::validate() const {
    require(!class_means.empty(), "mixture needs at least one class");
    require(dim() >= 1, "mixture dimension must be >= 1");
    for (const auto& m : class_means) require(m.size() == dim(), "class means differ in dimension");
    require(prior.classes() == classes(), "class prior size does not match class count");
    require(std_dev > 0.0, "mixture std must be positive");
}

ClassConditionalGaussian symmetric_mixture(std::size_t dim, std::size_t classes, double radius, double std_dev) {
    require(dim >= 1 && classes >= 1, "symmetric_mixture: bad shape");
    ClassConditionalGaussian g;
    g.std_dev = std_dev;
    g.prior = LabelHistogram::uniform(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
        std::vector<double> m(dim, 0.0);
        for (std::size_t k = 0; k + 1 < dim; k += 2) {
            m[k] = radius * std::cos(a);
            m[k + 1] = radius * std::sin(a);
        }
        g.class_means.push_back(std::move(m));
    }
    g.validate();
    return g;
}

LabelHistogram dirichlet_histogram(std::size_t classes, double alpha, Rng& rng) {
    require(alpha > 0.0, "dirichlet alpha must be positive");
    std::gamma_distribution<double> g(alpha, 1.0);
    std::vector<double> v(classes);
    for (auto& x : v) x = g(rng);
    double sum = std::accumulate(v.begin(), v.end(), 0.0);
    if (!(sum > 0.0)) {
        // All draws underflowed; the limit of a tiny-alpha Dirichlet is a vertex.
        std::fill(v.begin(), v.end(), 0.0);
        v[std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng)] = 1.0;
        sum = 1.0;
    }
    for (auto& x : v) x /= sum;
    return LabelHistogram(std::move(v));
}

LabelHistogram active_prior(const PartyStream& stream, const PartyRegime& regime) {
    if (!regime.label_alpha) return stream.base.prior;
    auto rng = make_rng({stream.seed, salt(Stream::label_prior), static_cast<std::uint64_t>(stream.party_id),
                         static_cast<std::uint64_t>(regime.label_window + 1)});
    return dirichlet_histogram(stream.base.classes(), *regime.label_alpha, rng);
}

Rng window_rng(const PartyStream& stream, int window_index) {
    return make_rng({stream.seed, salt(Stream::data), static_cast<std::uint64_t>(stream.party_id),
                     static_cast<std::uint64_t>(window_index)});
}

Dataset sample_window(const PartyStream& stream, int window_index, const PartyRegime& regime, std::size_t n,
                      Rng& rng) {
    require(n >= 1, "sample_window: n must be >= 1");
    (void)window_index;
    stream.base.validate();
    const auto prior = active_prior(stream, regime);

    // Separate sub-streams: the label sequence depends only on the prior, and
    // features only on the labels drawn.
    Rng label_rng(rng());
    Rng feature_rng(rng());
    Rng noise_rng(rng());

    std::discrete_distribution<int> pick(prior.probs().begin(), prior.probs().end());
    std::normal_distribution<double> unit(0.0, 1.0);
    Dataset out;
    out.dim = stream.base.dim();
    out.labels.resize(n);
    out.features.resize(n * out.dim);
    for (auto& y : out.labels) y = pick(label_rng);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& mu = stream.base.class_means[static_cast<std::size_t>(out.labels[i])];
        auto x = out.row(i);
        for (std::size_t k = 0; k < out.dim; ++k) x[k] = mu[k] + stream.base.std_dev * unit(feature_rng);
    }
    for (std::size_t i = 0; i < n; ++i) regime.transform.apply(out.row(i), noise_rng);
    return out;
}

} // namespace shiftex
