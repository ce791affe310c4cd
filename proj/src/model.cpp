#include "shiftex/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "shiftex/errors.hpp"

namespace shiftex {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

void ModelShape::validate() const {
    require(input_dim >= 1 && hidden_dim >= 1 && classes >= 2, "model shape needs input, hidden >= 1 and classes >= 2");
}

void ModelParams::validate() const {
    shape.validate();
    require(weights.size() == shape.parameter_count(), "parameter vector length does not match shape");
    for (double w : weights) require(std::isfinite(w), "non-finite parameter");
}

void TrainConfig::validate() const {
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(prox_coefficient >= 0.0, "prox_coefficient must be >= 0");
}

ModelParams init_model(const ModelShape& shape, std::uint64_t seed) {
    shape.validate();
    ModelParams p{shape, std::vector<double>(shape.parameter_count(), 0.0)};
    auto rng = make_rng({seed, salt(Stream::init)});
    // Glorot-uniform weights, zero biases.
    const double a1 = std::sqrt(6.0 / static_cast<double>(shape.input_dim + shape.hidden_dim));
    const double a2 = std::sqrt(6.0 / static_cast<double>(shape.hidden_dim + shape.classes));
    std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
    const std::size_t w1 = shape.hidden_dim * shape.input_dim;
    for (std::size_t i = 0; i < w1; ++i) p.weights[i] = u1(rng);
    const std::size_t h = p.head_offset();
    for (std::size_t i = 0; i < shape.classes * shape.hidden_dim; ++i) p.weights[h + i] = u2(rng);
    return p;
}

namespace {

struct Layout {
    const double* w1;
    const double* b1;
    const double* w2;
    const double* b2;
};

Layout layout(const ModelParams& p) {
    const auto& s = p.shape;
    const double* base = p.weights.data();
    return {base, base + s.hidden_dim * s.input_dim, base + p.head_offset(),
            base + p.head_offset() + s.classes * s.hidden_dim};
}

void hidden_into(const ModelParams& p, const Layout& l, std::span<const double> x, std::span<double> h) {
    const auto& s = p.shape;
    for (std::size_t j = 0; j < s.hidden_dim; ++j) {
        double a = l.b1[j];
        const double* row = l.w1 + j * s.input_dim;
        for (std::size_t k = 0; k < s.input_dim; ++k) a += row[k] * x[k];
        h[j] = std::tanh(a);
    }
}

void logits_into(const ModelParams& p, const Layout& l, std::span<const double> h, std::span<double> z) {
    const auto& s = p.shape;
    for (std::size_t c = 0; c < s.classes; ++c) {
        double a = l.b2[c];
        const double* row = l.w2 + c * s.hidden_dim;
        for (std::size_t j = 0; j < s.hidden_dim; ++j) a += row[j] * h[j];
        z[c] = a;
    }
}

std::size_t argmax(std::span<const double> z) {
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

void check_data(const ModelParams& p, const Dataset& data) {
    require(!data.empty(), "dataset is empty");
    require(data.dim == p.shape.input_dim, "dataset feature dimension does not match model input");
    for (int y : data.labels)
        require(y >= 0 && static_cast<std::size_t>(y) < p.shape.classes, "label outside model class range");
}

// Accumulates the summed cross-entropy gradient of rows `idx` into grad and
// returns the summed loss.
double accumulate_batch(const ModelParams& p, const Dataset& data, std::span<const std::size_t> idx,
                        std::vector<double>& grad) {
    const auto& s = p.shape;
    const Layout l = layout(p);
    std::vector<double> h(s.hidden_dim), z(s.classes), dh(s.hidden_dim);
    double* g_w1 = grad.data();
    double* g_b1 = g_w1 + s.hidden_dim * s.input_dim;
    double* g_w2 = grad.data() + p.head_offset();
    double* g_b2 = g_w2 + s.classes * s.hidden_dim;
    double loss = 0.0;
    for (auto i : idx) {
        auto x = data.row(i);
        const auto y = static_cast<std::size_t>(data.labels[i]);
        hidden_into(p, l, x, h);
        logits_into(p, l, h, z);
        const double zmax = *std::max_element(z.begin(), z.end());
        double norm = 0.0;
        for (auto& v : z) {
            v = std::exp(v - zmax);
            norm += v;
        }
        loss += -std::log(z[y] / norm);
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t c = 0; c < s.classes; ++c) {
            const double dz = z[c] / norm - (c == y ? 1.0 : 0.0);
            g_b2[c] += dz;
            const double* w2row = l.w2 + c * s.hidden_dim;
            double* g_row = g_w2 + c * s.hidden_dim;
            for (std::size_t j = 0; j < s.hidden_dim; ++j) {
                g_row[j] += dz * h[j];
                dh[j] += dz * w2row[j];
            }
        }
        for (std::size_t j = 0; j < s.hidden_dim; ++j) {
            const double da = dh[j] * (1.0 - h[j] * h[j]);
            g_b1[j] += da;
            double* g_row = g_w1 + j * s.input_dim;
            for (std::size_t k = 0; k < s.input_dim; ++k) g_row[k] += da * x[k];
        }
    }
    return loss;
}

} // namespace

std::vector<double> embed(const ModelParams& params, std::span<const double> x) {
    require(x.size() == params.shape.input_dim, "embed: input dimension mismatch");
    std::vector<double> h(params.shape.hidden_dim);
    hidden_into(params, layout(params), x, h);
    return h;
}

EmbeddingSet embed_all(const ModelParams& params, const Dataset& data) {
    require(!data.empty(), "embed_all: empty dataset");
    require(data.dim == params.shape.input_dim, "embed_all: input dimension mismatch");
    const Layout l = layout(params);
    std::vector<double> out(data.size() * params.shape.hidden_dim);
    for (std::size_t i = 0; i < data.size(); ++i)
        hidden_into(params, l, data.row(i),
                    std::span<double>(out.data() + i * params.shape.hidden_dim, params.shape.hidden_dim));
    return EmbeddingSet(params.shape.hidden_dim, std::move(out));
}

std::vector<double> logits(const ModelParams& params, std::span<const double> x) {
    require(x.size() == params.shape.input_dim, "logits: input dimension mismatch");
    const Layout l = layout(params);
    std::vector<double> h(params.shape.hidden_dim), z(params.shape.classes);
    hidden_into(params, l, x, h);
    logits_into(params, l, h, z);
    return z;
}

double loss_and_gradient(const ModelParams& params, const Dataset& data, double prox, const ModelParams* anchor,
                         std::vector<double>* grad) {
    check_data(params, data);
    require(prox == 0.0 || anchor != nullptr, "proximal term needs an anchor");
    std::vector<double> g(params.weights.size(), 0.0);
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    const double n = static_cast<double>(data.size());
    double loss = accumulate_batch(params, data, idx, g) / n;
    for (auto& v : g) v /= n;
    if (prox > 0.0) {
        require(anchor->weights.size() == params.weights.size(), "anchor shape mismatch");
        double sq = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double d = params.weights[i] - anchor->weights[i];
            sq += d * d;
            g[i] += prox * d;
        }
        loss += 0.5 * prox * sq;
    }
    if (grad) *grad = std::move(g);
    return loss;
}

ModelParams local_train(const ModelParams& params, const Dataset& data, const TrainConfig& cfg,
                        const ModelParams* anchor, Rng& rng) {
    cfg.validate();
    check_data(params, data);
    const bool prox = cfg.prox_coefficient > 0.0;
    require(!prox || anchor != nullptr, "local_train: proximal training needs an anchor");
    if (prox) require(anchor->shape == params.shape, "local_train: anchor shape mismatch");

    ModelParams p = params;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad(p.weights.size());
    const double shrink = 1.0 / (1.0 + cfg.learning_rate * cfg.prox_coefficient);
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            accumulate_batch(p, data, std::span<const std::size_t>(order).subspan(start, end - start), grad);
            const double step = cfg.learning_rate / static_cast<double>(end - start);
            for (std::size_t i = 0; i < grad.size(); ++i) p.weights[i] -= step * grad[i];
            if (prox) {
                const double pull = cfg.learning_rate * cfg.prox_coefficient;
                for (std::size_t i = 0; i < grad.size(); ++i)
                    p.weights[i] = (p.weights[i] + pull * anchor->weights[i]) * shrink;
            }
        }
    }
    return p;
}

ModelParams fed_aggregate(std::span<const std::pair<ModelParams, double>> updates) {
    require(!updates.empty(), "fed_aggregate: no updates");
    const auto& shape = updates.front().first.shape;
    for (const auto& [p, w] : updates) {
        require(p.shape == shape && p.weights.size() == shape.parameter_count(), "fed_aggregate: shape mismatch");
        require(w > 0.0, "fed_aggregate: weights must be positive");
    }
    if (updates.size() == 1) return updates.front().first;

    // Sum in a canonical order (by weight, then lexicographically by
    // parameters) so the result does not depend on input order.
    std::vector<std::size_t> order(updates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (updates[a].second != updates[b].second) return updates[a].second < updates[b].second;
        return updates[a].first.weights < updates[b].first.weights;
    });
    double total = 0.0;
    for (auto i : order) total += updates[i].second;
    bool all_same = true;
    for (const auto& [p, w] : updates) all_same = all_same && p.weights == updates.front().first.weights;
    if (all_same) return updates.front().first;

    ModelParams out{shape, std::vector<double>(shape.parameter_count(), 0.0)};
    for (auto i : order) {
        const double a = updates[i].second / total;
        const auto& w = updates[i].first.weights;
        for (std::size_t k = 0; k < w.size(); ++k) out.weights[k] += a * w[k];
    }
    return out;
}

std::size_t count_correct(const ModelParams& params, const Dataset& data) {
    check_data(params, data);
    const Layout l = layout(params);
    std::vector<double> h(params.shape.hidden_dim), z(params.shape.classes);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        hidden_into(params, l, data.row(i), h);
        logits_into(params, l, h, z);
        if (argmax(z) == static_cast<std::size_t>(data.labels[i])) ++correct;
    }
    return correct;
}

double evaluate(const ModelParams& params, const Dataset& data) {
    return static_cast<double>(count_correct(params, data)) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(static_cast<bool>(in), "truncated checkpoint");
    return v;
}

constexpr char kMagic[4] = {'S', 'X', 'M', 'P'};
constexpr std::uint32_t kVersion = 1;

} // namespace

void write_params_binary(std::ostream& out, const ModelParams& params) {
    params.validate();
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, params.shape.input_dim);
    put<std::uint64_t>(out, params.shape.hidden_dim);
    put<std::uint64_t>(out, params.shape.classes);
    put<std::uint64_t>(out, params.weights.size());
    out.write(reinterpret_cast<const char*>(params.weights.data()),
              static_cast<std::streamsize>(params.weights.size() * sizeof(double)));
}

ModelParams read_params_binary(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    require(in && std::memcmp(magic, kMagic, 4) == 0, "not a model checkpoint");
    require(get<std::uint32_t>(in) == kVersion, "unsupported checkpoint version");
    ModelParams p;
    p.shape.input_dim = get<std::uint64_t>(in);
    p.shape.hidden_dim = get<std::uint64_t>(in);
    p.shape.classes = get<std::uint64_t>(in);
    const auto n = get<std::uint64_t>(in);
    require(n == p.shape.parameter_count(), "checkpoint weight count does not match its shape");
    p.weights.resize(n);
    in.read(reinterpret_cast<char*>(p.weights.data()), static_cast<std::streamsize>(n * sizeof(double)));
    require(static_cast<bool>(in), "truncated checkpoint");
    p.validate();
    return p;
}

std::string params_to_json(const ModelParams& params) {
    nlohmann::json j;
    j["shape"] = {{"input_dim", params.shape.input_dim},
                  {"hidden_dim", params.shape.hidden_dim},
                  {"classes", params.shape.classes}};
    j["weights"] = params.weights;
    return j.dump();
}

ModelParams params_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ModelParams p;
    p.shape.input_dim = j.at("shape").at("input_dim").get<std::size_t>();
    p.shape.hidden_dim = j.at("shape").at("hidden_dim").get<std::size_t>();
    p.shape.classes = j.at("shape").at("classes").get<std::size_t>();
    p.weights = j.at("weights").get<std::vector<double>>();
    p.validate();
    return p;
}

} // namespace shiftex
