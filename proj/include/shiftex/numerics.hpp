#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace shiftex {

/// Dense row-major set of d-dimensional vectors (embeddings or features).
class EmbeddingSet {
public:
    EmbeddingSet() = default;
    EmbeddingSet(std::size_t dim, std::vector<double> data);
    static EmbeddingSet from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return data_.empty(); }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

    void append(std::span<const double> r);

    const std::vector<double>& data() const { return data_; }

    /// Column-wise arithmetic mean.
    std::vector<double> mean() const;

    /// Rows at the given indices, in that order.
    EmbeddingSet select(std::span<const std::size_t> idx) const;

    friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

/// Normalized class histogram. Entries are nonnegative and sum to 1.
class LabelHistogram {
public:
    LabelHistogram() = default;
    explicit LabelHistogram(std::vector<double> probs);
    static LabelHistogram uniform(std::size_t classes);

    std::size_t classes() const { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    const std::vector<double>& probs() const { return probs_; }

    friend bool operator==(const LabelHistogram&, const LabelHistogram&) = default;

private:
    std::vector<double> probs_;
};

enum class KernelFamily { rbf };

/// RBF kernel parameters. A spec built with `median()` resolves its
/// bandwidth from the pooled sample at each comparison.
struct KernelSpec {
    KernelFamily family = KernelFamily::rbf;
    double gamma = 1.0;
    bool median_heuristic = false;

    static KernelSpec fixed(double gamma);
    static KernelSpec median() { return KernelSpec{KernelFamily::rbf, 1.0, true}; }
};

double squared_distance(std::span<const double> x, std::span<const double> y);

double rbf_kernel(std::span<const double> x, std::span<const double> y, const KernelSpec& spec);

/// 1 / median of pairwise squared distances over X ∪ Y. Falls back to 1 when
/// the median is zero (degenerate pooled sample).
double median_heuristic_gamma(const EmbeddingSet& x, const EmbeddingSet& y);

/// Biased (V-statistic) estimate of MMD² under an RBF kernel, clamped at 0.
/// Exactly symmetric in its arguments.
double mmd_squared(const EmbeddingSet& x, const EmbeddingSet& y, const KernelSpec& spec);

/// Jensen-Shannon divergence, natural log, bounded by ln 2.
double jsd(const LabelHistogram& p, const LabelHistogram& q);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

LabelHistogram label_histogram(std::span<const int> labels, std::size_t classes);

/// Weighted mixture of histograms; weights need not be normalized.
LabelHistogram mix_histograms(std::span<const LabelHistogram> hists, std::span<const double> weights);

/// Nearest-rank quantile of `values` at level q in (0, 1].
double nearest_rank_quantile(std::vector<double> values, double q);

} // namespace shiftex
