#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shiftex/random.hpp"
#include "shiftex/stream.hpp"

namespace shiftex {

/// Two-layer classifier: tanh hidden layer (the embedding) and a linear head.
struct ModelShape {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t classes = 0;

    std::size_t parameter_count() const {
        return hidden_dim * input_dim + hidden_dim + classes * hidden_dim + classes;
    }
    void validate() const;
    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Flat parameter layout, row-major per layer:
///   W1 [hidden x input] | b1 [hidden] | W2 [classes x hidden] | b2 [classes]
struct ModelParams {
    ModelShape shape;
    std::vector<double> weights;

    std::size_t head_offset() const { return shape.hidden_dim * shape.input_dim + shape.hidden_dim; }
    void validate() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 16;
    double prox_coefficient = 0.0;

    void validate() const;
};

ModelParams init_model(const ModelShape& shape, std::uint64_t seed);

/// Penultimate-layer activations for one input.
std::vector<double> embed(const ModelParams& params, std::span<const double> x);

/// Embeddings of every row in `data`.
EmbeddingSet embed_all(const ModelParams& params, const Dataset& data);

std::vector<double> logits(const ModelParams& params, std::span<const double> x);

/// Mean cross-entropy over `data` plus (prox/2)*||params - anchor||^2 when
/// prox > 0. Fills `grad` (same layout as the weights) when non-null.
double loss_and_gradient(const ModelParams& params, const Dataset& data, double prox,
                         const ModelParams* anchor, std::vector<double>* grad);

/// Mini-batch SGD on cross-entropy for cfg.local_epochs epochs. With a
/// positive prox coefficient each step is followed by the closed-form
/// proximal map toward `anchor`.
ModelParams local_train(const ModelParams& params, const Dataset& data, const TrainConfig& cfg,
                        const ModelParams* anchor, Rng& rng);

/// Weight-normalized average of parameter vectors.
ModelParams fed_aggregate(std::span<const std::pair<ModelParams, double>> updates);

/// Fraction of argmax-correct predictions.
double evaluate(const ModelParams& params, const Dataset& data);

/// Number of correct predictions (for sample-weighted aggregation).
std::size_t count_correct(const ModelParams& params, const Dataset& data);

// Checkpoints: binary is "SXMP" magic, u32 version, three u64 shape fields,
// u64 weight count, then little-endian doubles in layout order.
void write_params_binary(std::ostream& out, const ModelParams& params);
ModelParams read_params_binary(std::istream& in);
std::string params_to_json(const ModelParams& params);
ModelParams params_from_json(const std::string& text);

} // namespace shiftex
