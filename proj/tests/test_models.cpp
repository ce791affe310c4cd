#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"

#include "shiftex/errors.hpp"
#include "shiftex/model.hpp"
#include "shiftex/random.hpp"

using namespace shiftex;

namespace {

// Two Gaussian blobs in 2-d separated by 6 standard deviations along x.
Dataset separable_toy(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Dataset d;
    d.dim = 2;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        const double x0 = (y == 0 ? -3.0 : 3.0) + g(rng), x1 = g(rng);
        const std::vector<double> x{x0, x1};
        d.push_back(x, y);
    }
    return d;
}

double l2(const ModelParams& a, const ModelParams& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.weights.size(); ++i) s += (a.weights[i] - b.weights[i]) * (a.weights[i] - b.weights[i]);
    return std::sqrt(s);
}

} // namespace

TEST_SUITE("models") {

TEST_CASE("parameter count of the default shape") {
    const ModelShape s{8, 16, 4};
    CHECK(s.parameter_count() == 8 * 16 + 16 + 16 * 4 + 4);
    CHECK(s.parameter_count() == 212);
    CHECK(init_model(s, 1).weights.size() == 212);
}

TEST_CASE("init_model is deterministic and seed-sensitive") {
    const ModelShape s{8, 16, 4};
    CHECK(init_model(s, 3) == init_model(s, 3));
    for (std::uint64_t seed = 0; seed < 100; ++seed) CHECK(init_model(s, seed) != init_model(s, seed + 1000));
    for (double w : init_model(s, 9).weights) CHECK(std::isfinite(w));
}

TEST_CASE("zero local epochs leave params unchanged") {
    const auto d = separable_toy(40, 1);
    const auto p = init_model({2, 4, 2}, 5);
    TrainConfig cfg;
    cfg.local_epochs = 0;
    Rng rng(1);
    CHECK(local_train(p, d, cfg, nullptr, rng) == p);
    CHECK_THROWS_AS(local_train(p, Dataset{2, {}, {}}, TrainConfig{}, nullptr, rng), UsageError);
}

TEST_CASE("separable toy is learned perfectly") {
    const auto d = separable_toy(200, 2);
    // Oracle: the perpendicular bisector of the two empirical class means.
    std::vector<double> m0(2, 0.0), m1(2, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t k = 0; k < 2; ++k) (d.labels[i] == 0 ? m0 : m1)[k] += d.row(i)[k] / 100.0;
    std::size_t linear_correct = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        double score = 0.0;
        for (std::size_t k = 0; k < 2; ++k) score += (m1[k] - m0[k]) * (d.row(i)[k] - 0.5 * (m0[k] + m1[k]));
        linear_correct += (score > 0) == (d.labels[i] == 1);
    }
    REQUIRE(linear_correct == d.size());

    TrainConfig cfg;
    cfg.local_epochs = 20;
    Rng rng(3);
    const auto trained = local_train(init_model({2, 8, 2}, 4), d, cfg, nullptr, rng);
    CHECK(evaluate(trained, d) == 1.0);
}

TEST_CASE("analytic gradient matches central differences") {
    Rng drng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    Dataset d;
    d.dim = 3;
    for (int i = 0; i < 12; ++i) {
        const std::vector<double> x{g(drng), g(drng), g(drng)};
        d.push_back(x, i % 3);
    }
    for (double prox : {0.0, 0.7}) {
        auto p = init_model({3, 5, 3}, 11);
        for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] += 0.1 * g(drng);
        const auto anchor = init_model({3, 5, 3}, 12);
        std::vector<double> grad;
        loss_and_gradient(p, d, prox, &anchor, &grad);
        std::uniform_int_distribution<std::size_t> pick(0, p.weights.size() - 1);
        for (int t = 0; t < 10; ++t) {
            const std::size_t i = pick(drng);
            const double h = 1e-5;
            auto plus = p, minus = p;
            plus.weights[i] += h;
            minus.weights[i] -= h;
            const double fd = (loss_and_gradient(plus, d, prox, &anchor, nullptr) -
                               loss_and_gradient(minus, d, prox, &anchor, nullptr)) /
                              (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
            CHECK(std::abs(fd - grad[i]) / denom < 1e-4);
        }
    }
}

TEST_CASE("embed ignores the classification head") {
    auto p = init_model({4, 6, 3}, 21);
    const std::vector<double> x{0.1, -0.5, 2.0, 0.3};
    const auto e1 = embed(p, x);
    CHECK(e1.size() == 6);
    CHECK(embed(p, x) == e1);
    for (std::size_t i = p.head_offset(); i < p.weights.size(); ++i) p.weights[i] += 3.0;
    CHECK(embed(p, x) == e1);
    CHECK_THROWS_AS(embed(p, std::vector<double>{1.0}), UsageError);
}

TEST_CASE("fed_aggregate arithmetic") {
    const auto a = init_model({2, 3, 2}, 1), b = init_model({2, 3, 2}, 2);
    const std::vector<std::pair<ModelParams, double>> one{{a, 5.0}};
    CHECK(fed_aggregate(one) == a);
    const std::vector<std::pair<ModelParams, double>> eq{{a, 1.0}, {b, 1.0}};
    const std::vector<std::pair<ModelParams, double>> w31{{a, 3.0}, {b, 1.0}};
    const auto m = fed_aggregate(eq), m31 = fed_aggregate(w31);
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
        CHECK(m.weights[i] == doctest::Approx((a.weights[i] + b.weights[i]) / 2));
        CHECK(m31.weights[i] == doctest::Approx(0.75 * a.weights[i] + 0.25 * b.weights[i]));
    }
    const std::vector<std::pair<ModelParams, double>> copies{{a, 1.0}, {a, 2.0}, {a, 0.5}};
    CHECK(fed_aggregate(copies) == a);
    const std::vector<std::pair<ModelParams, double>> mismatch{{a, 1.0}, {init_model({2, 4, 2}, 1), 1.0}};
    CHECK_THROWS_AS(fed_aggregate(mismatch), UsageError);
}

TEST_CASE("fed_aggregate is permutation invariant") {
    Rng rng(9);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<std::pair<ModelParams, double>> ups;
        for (int k = 0; k < 2 + t % 5; ++k) ups.emplace_back(init_model({3, 4, 2}, rng()), u(rng));
        const auto ref = fed_aggregate(ups);
        std::shuffle(ups.begin(), ups.end(), rng);
        CHECK(fed_aggregate(ups) == ref);
    }
}

TEST_CASE("evaluate examples") {
    // Hidden layer is x -> tanh(5x); class 0 scores h, class 1 scores -h.
    ModelParams p{{1, 1, 2}, {5.0, 0.0, 1.0, -1.0, 0.0, 0.0}};
    Dataset d;
    d.dim = 1;
    for (int i = 0; i < 10; ++i) {
        const std::vector<double> x{i % 2 ? 1.0 : -1.0};
        d.push_back(x, i % 2 ? 0 : 1);
    }
    CHECK(evaluate(p, d) == 1.0);
    for (auto& y : d.labels) y = 1 - y;
    CHECK(evaluate(p, d) == 0.0);

    // Constant +10 logit margin for class 0.
    ModelParams c{{1, 1, 2}, {0.0, 0.0, 0.0, 0.0, 10.0, 0.0}};
    for (auto& y : d.labels) y = 0;
    CHECK(evaluate(c, d) == 1.0);
    CHECK_THROWS_AS(evaluate(c, Dataset{1, {}, {}}), UsageError);
}

TEST_CASE("untrained model is at chance on label-independent inputs") {
    const std::size_t classes = 4;
    Rng rng(31);
    std::normal_distribution<double> g(0.0, 1.0);
    Dataset d;
    d.dim = 8;
    for (std::size_t i = 0; i < 10000; ++i) {
        std::vector<double> x(8);
        for (auto& v : x) v = g(rng);
        d.push_back(x, static_cast<int>(i % classes));
    }
    CHECK(std::abs(evaluate(init_model({8, 16, classes}, 77), d) - 0.25) < 0.02);
}

TEST_CASE("proximal term pulls toward the anchor") {
    const auto d = separable_toy(64, 5);
    const auto start = init_model({2, 6, 2}, 8);
    TrainConfig plain;
    plain.local_epochs = 1;
    TrainConfig prox = plain;
    prox.prox_coefficient = 1e6;
    Rng r1(1), r2(1);
    const auto sgd = local_train(start, d, plain, &start, r1);
    const auto pulled = local_train(start, d, prox, &start, r2);
    CHECK(l2(pulled, start) < l2(sgd, start));
}

TEST_CASE("full-batch loss is non-increasing at a small learning rate") {
    const auto d = separable_toy(60, 6);
    auto p = init_model({2, 6, 2}, 13);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.local_epochs = 1;
    cfg.batch_size = d.size();
    Rng rng(2);
    double prev = loss_and_gradient(p, d, 0.0, nullptr, nullptr);
    for (int e = 0; e < 50; ++e) {
        p = local_train(p, d, cfg, nullptr, rng);
        const double cur = loss_and_gradient(p, d, 0.0, nullptr, nullptr);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
}

TEST_CASE("checkpoint round trips") {
    const auto p = init_model({8, 16, 4}, 42);
    std::stringstream bin;
    write_params_binary(bin, p);
    CHECK(read_params_binary(bin) == p);
    CHECK(params_from_json(params_to_json(p)) == p);
    std::stringstream garbage("nope");
    CHECK_THROWS(read_params_binary(garbage));
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), UsageError);
    c.learning_rate = 0.1;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), UsageError);
}

}
