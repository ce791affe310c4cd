#include "shiftex/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "shiftex/errors.hpp"
#include "shiftex/random.hpp"

namespace shiftex {

namespace {

std::size_t count_distinct(const EmbeddingSet& pts) {
    std::vector<std::vector<double>> rows;
    rows.reserve(pts.rows());
    for (std::size_t i = 0; i < pts.rows(); ++i) rows.emplace_back(pts.row(i).begin(), pts.row(i).end());
    std::sort(rows.begin(), rows.end());
    return static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

std::vector<std::vector<double>> seed_plus_plus(const EmbeddingSet& pts, std::size_t k, Rng& rng) {
    const std::size_t n = pts.rows();
    std::vector<std::vector<double>> centers;
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    auto c0 = pts.row(first(rng));
    centers.emplace_back(c0.begin(), c0.end());
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(pts.row(i), centers.back()));
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (pick = 0; pick + 1 < n; ++pick) {
                if (u < d2[pick]) break;
                u -= d2[pick];
            }
            while (d2[pick] == 0.0) pick = (pick + 1) % n;
        }
        auto c = pts.row(pick);
        centers.emplace_back(c.begin(), c.end());
    }
    return centers;
}

KMeansResult lloyd(const EmbeddingSet& pts, std::vector<std::vector<double>> centers, std::size_t max_iter) {
    const std::size_t n = pts.rows(), d = pts.dim(), k = centers.size();
    std::vector<std::size_t> labels(n, 0);
    for (std::size_t it = 0; it < max_iter; ++it) {
        bool changed = it == 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double dist = squared_distance(pts.row(i), centers[c]);
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            if (labels[i] != best) changed = true;
            labels[i] = best;
        }
        std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[labels[i]];
            for (std::size_t j = 0; j < d; ++j) sums[labels[i]][j] += pts.row(i)[j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Reseed an emptied cluster at the point farthest from its centroid.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double dist = squared_distance(pts.row(i), centers[labels[i]]);
                    if (dist > far_d) {
                        far_d = dist;
                        far = i;
                    }
                }
                centers[c].assign(pts.row(far).begin(), pts.row(far).end());
                labels[far] = c;
                changed = true;
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        }
        if (!changed) break;
    }
    KMeansResult r;
    r.labels = std::move(labels);
    r.centroids = std::move(centers);
    for (std::size_t i = 0; i < n; ++i) r.inertia += squared_distance(pts.row(i), r.centroids[r.labels[i]]);
    return r;
}

// Relabels clusters in order of their smallest member so equivalent
// partitions compare equal.
void canonicalize(KMeansResult& r) {
    const std::size_t k = r.centroids.size();
    std::vector<std::size_t> first(k, std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < r.labels.size(); ++i) first[r.labels[i]] = std::min(first[r.labels[i]], i);
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return first[a] < first[b]; });
    std::vector<std::size_t> remap(k);
    std::vector<std::vector<double>> centroids;
    for (std::size_t pos = 0; pos < k; ++pos) {
        remap[order[pos]] = pos;
        centroids.push_back(r.centroids[order[pos]]);
    }
    for (auto& l : r.labels) l = remap[l];
    r.centroids = std::move(centroids);
}

} // namespace

KMeansResult kmeans(const EmbeddingSet& points, std::size_t k, std::uint64_t seed, std::size_t restarts,
                    std::size_t max_iter) {
    require(points.rows() > 0, "kmeans: no points");
    require(k >= 1 && k <= points.rows(), "kmeans: k must lie in [1, n]");
    require(k <= count_distinct(points), "kmeans: k exceeds the number of distinct points");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
        auto rng = make_rng({seed, salt(Stream::cluster), k, r});
        auto result = lloyd(points, seed_plus_plus(points, k, rng), max_iter);
        if (result.inertia < best.inertia) best = std::move(result);
    }
    canonicalize(best);
    return best;
}

double davies_bouldin(const EmbeddingSet& points, const KMeansResult& c) {
    const std::size_t k = c.centroids.size();
    require(k >= 2, "davies_bouldin: needs at least two clusters");
    std::vector<double> scatter(k, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        scatter[c.labels[i]] += std::sqrt(squared_distance(points.row(i), c.centroids[c.labels[i]]));
        ++counts[c.labels[i]];
    }
    for (std::size_t j = 0; j < k; ++j) scatter[j] = counts[j] ? scatter[j] / static_cast<double>(counts[j]) : 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            const double sep = std::sqrt(squared_distance(c.centroids[i], c.centroids[j]));
            const double r = sep > 0.0 ? (scatter[i] + scatter[j]) / sep : std::numeric_limits<double>::infinity();
            worst = std::max(worst, r);
        }
        total += worst;
    }
    return total / static_cast<double>(k);
}

ClusterChoice choose_clusters(const EmbeddingSet& points, std::size_t k_max, std::uint64_t seed) {
    const std::size_t n = points.rows();
    require(n > 0, "choose_clusters: no points");
    const std::size_t distinct = count_distinct(points);
    ClusterChoice single;
    single.k = 1;
    single.clustering = kmeans(points, 1, seed, 1);
    if (n < 4 || distinct < 2) return single;

    const std::size_t hi = std::min({k_max, n - 1, distinct});
    std::optional<ClusterChoice> best, best_with_singletons;
    for (std::size_t k = 2; k <= hi; ++k) {
        ClusterChoice cand;
        cand.k = k;
        cand.clustering = kmeans(points, k, seed);
        cand.db_index = davies_bouldin(points, cand.clustering);
        std::vector<std::size_t> sizes(k, 0);
        for (auto l : cand.clustering.labels) ++sizes[l];
        const bool has_singleton = std::find(sizes.begin(), sizes.end(), 1) != sizes.end();
        auto& slot = has_singleton ? best_with_singletons : best;
        if (!slot || cand.db_index < slot->db_index) slot = std::move(cand);
    }
    if (best) return *best;
    if (best_with_singletons) return *best_with_singletons;
    return single;
}

std::vector<std::vector<std::size_t>> cluster_members(const KMeansResult& clustering) {
    std::vector<std::vector<std::size_t>> groups(clustering.centroids.size());
    for (std::size_t i = 0; i < clustering.labels.size(); ++i) groups[clustering.labels[i]].push_back(i);
    std::erase_if(groups, [](const auto& g) { return g.empty(); });
    return groups;
}

} // namespace shiftex
