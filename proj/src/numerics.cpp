#include "shiftex/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "shiftex/errors.hpp"

namespace shiftex {

EmbeddingSet::EmbeddingSet(std::size_t dim, std::vector<double> data)
    : dim_(dim), data_(std::move(data)) {
    require(dim_ >= 1, "EmbeddingSet: dimension must be >= 1");
    require(data_.size() % dim_ == 0, "EmbeddingSet: data length is not a multiple of dim");
}

EmbeddingSet EmbeddingSet::from_rows(const std::vector<std::vector<double>>& rows) {
    require(!rows.empty(), "EmbeddingSet: no rows");
    const std::size_t d = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * d);
    for (const auto& r : rows) {
        require(r.size() == d, "EmbeddingSet: ragged rows");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return EmbeddingSet(d, std::move(flat));
}

void EmbeddingSet::append(std::span<const double> r) {
    if (dim_ == 0) dim_ = r.size();
    require(r.size() == dim_ && dim_ >= 1, "EmbeddingSet: appended row has wrong dimension");
    data_.insert(data_.end(), r.begin(), r.end());
}

std::vector<double> EmbeddingSet::mean() const {
    require(rows() > 0, "EmbeddingSet: mean of empty set");
    std::vector<double> m(dim_, 0.0);
    for (std::size_t i = 0; i < rows(); ++i) {
        auto r = row(i);
        for (std::size_t k = 0; k < dim_; ++k) m[k] += r[k];
    }
    for (auto& v : m) v /= static_cast<double>(rows());
    return m;
}

EmbeddingSet EmbeddingSet::select(std::span<const std::size_t> idx) const {
    std::vector<double> out;
    out.reserve(idx.size() * dim_);
    for (auto i : idx) {
        require(i < rows(), "EmbeddingSet: row index out of range");
        auto r = row(i);
        out.insert(out.end(), r.begin(), r.end());
    }
    return EmbeddingSet(dim_, std::move(out));
}

LabelHistogram::LabelHistogram(std::vector<double> probs) : probs_(std::move(probs)) {
    require(!probs_.empty(), "LabelHistogram: no classes");
    double sum = 0.0;
    for (double p : probs_) {
        require(p >= 0.0 && std::isfinite(p), "LabelHistogram: negative or non-finite entry");
        sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "LabelHistogram: entries sum to " + std::to_string(sum));
}

LabelHistogram LabelHistogram::uniform(std::size_t classes) {
    require(classes >= 1, "LabelHistogram: no classes");
    return LabelHistogram(std::vector<double>(classes, 1.0 / static_cast<double>(classes)));
}

KernelSpec KernelSpec::fixed(double gamma) {
    require(gamma > 0.0 && std::isfinite(gamma), "KernelSpec: gamma must be positive");
    return KernelSpec{KernelFamily::rbf, gamma, false};
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), "dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - y[k];
        s += d * d;
    }
    return s;
}

double rbf_kernel(std::span<const double> x, std::span<const double> y, const KernelSpec& spec) {
    require(spec.gamma > 0.0, "rbf_kernel: gamma must be positive");
    return std::exp(-spec.gamma * squared_distance(x, y));
}

double median_heuristic_gamma(const EmbeddingSet& x, const EmbeddingSet& y) {
    require(x.dim() == y.dim(), "median_heuristic_gamma: dimension mismatch");
    const std::size_t n = x.rows() + y.rows();
    auto pooled = [&](std::size_t i) { return i < x.rows() ? x.row(i) : y.row(i - x.rows()); };
    std::vector<double> d2;
    d2.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d2.push_back(squared_distance(pooled(i), pooled(j)));
    if (d2.empty()) return 1.0;
    // Lower median: a deterministic element of the multiset regardless of pool order.
    auto mid = d2.begin() + static_cast<std::ptrdiff_t>((d2.size() - 1) / 2);
    std::nth_element(d2.begin(), mid, d2.end());
    return *mid > 0.0 ? 1.0 / *mid : 1.0;
}

namespace {

double kernel_sum(const EmbeddingSet& a, const EmbeddingSet& b, double gamma) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) s += std::exp(-gamma * squared_distance(ai, b.row(j)));
    }
    return s;
}

// Canonical argument order so that the cross term is accumulated identically
// for (X, Y) and (Y, X).
bool canonical_less(const EmbeddingSet& a, const EmbeddingSet& b) {
    if (a.rows() != b.rows()) return a.rows() < b.rows();
    return std::lexicographical_compare(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

} // namespace

double mmd_squared(const EmbeddingSet& x, const EmbeddingSet& y, const KernelSpec& spec) {
    require(x.rows() > 0 && y.rows() > 0, "mmd_squared: empty sample");
    require(x.dim() == y.dim(), "mmd_squared: dimension mismatch");
    const double gamma = spec.median_heuristic ? median_heuristic_gamma(x, y) : spec.gamma;
    require(gamma > 0.0, "mmd_squared: gamma must be positive");

    const bool swap = canonical_less(y, x);
    const EmbeddingSet& a = swap ? y : x;
    const EmbeddingSet& b = swap ? x : y;
    const double na = static_cast<double>(a.rows());
    const double nb = static_cast<double>(b.rows());
    const double kaa = kernel_sum(a, a, gamma) / (na * na);
    const double kbb = kernel_sum(b, b, gamma) / (nb * nb);
    const double kab = kernel_sum(a, b, gamma) / (na * nb);
    return std::max(0.0, kaa + kbb - 2.0 * kab);
}

double jsd(const LabelHistogram& p, const LabelHistogram& q) {
    require(p.classes() == q.classes(), "jsd: class count mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.classes(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        const double a = p[i] > 0.0 ? p[i] * std::log(p[i] / m) : 0.0;
        const double b = q[i] > 0.0 ? q[i] * std::log(q[i] / m) : 0.0;
        s += 0.5 * (a + b);   // a + b commutes exactly, so jsd(p, q) == jsd(q, p)
    }
    return std::clamp(s, 0.0, std::log(2.0));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    require(na > 0.0 && nb > 0.0, "cosine_similarity: zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

LabelHistogram label_histogram(std::span<const int> labels, std::size_t classes) {
    require(!labels.empty(), "label_histogram: empty label list");
    require(classes >= 1, "label_histogram: no classes");
    std::vector<double> counts(classes, 0.0);
    for (int y : labels) {
        require(y >= 0 && static_cast<std::size_t>(y) < classes,
                "label_histogram: label " + std::to_string(y) + " out of range");
        counts[static_cast<std::size_t>(y)] += 1.0;
    }
    for (auto& c : counts) c /= static_cast<double>(labels.size());
    return LabelHistogram(std::move(counts));
}

LabelHistogram mix_histograms(std::span<const LabelHistogram> hists, std::span<const double> weights) {
    require(!hists.empty() && hists.size() == weights.size(), "mix_histograms: bad arguments");
    const std::size_t c = hists.front().classes();
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    require(total > 0.0, "mix_histograms: weights sum to zero");
    std::vector<double> out(c, 0.0);
    for (std::size_t h = 0; h < hists.size(); ++h) {
        require(hists[h].classes() == c, "mix_histograms: class count mismatch");
        for (std::size_t i = 0; i < c; ++i) out[i] += weights[h] / total * hists[h][i];
    }
    const double s = std::accumulate(out.begin(), out.end(), 0.0);
    for (auto& v : out) v /= s;
    return LabelHistogram(std::move(out));
}

double nearest_rank_quantile(std::vector<double> values, double q) {
    require(!values.empty(), "nearest_rank_quantile: no values");
    require(q > 0.0 && q <= 1.0, "nearest_rank_quantile: level must lie in (0, 1]");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

} // namespace shiftex
