#pragma once

#include <cstdint>
#include <vector>

#include "shiftex/numerics.hpp"

namespace shiftex {

struct KMeansResult {
    std::vector<std::size_t> labels;         // cluster index per point
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
};

/// Lloyd's k-means with seeded k-means++ seeding; the restart with the lowest
/// inertia wins. Requires k <= number of distinct points.
KMeansResult kmeans(const EmbeddingSet& points, std::size_t k, std::uint64_t seed, std::size_t restarts = 10,
                    std::size_t max_iter = 100);

/// Davies-Bouldin index of a partition (scatter = mean Euclidean distance to
/// the centroid). Requires at least two clusters.
double davies_bouldin(const EmbeddingSet& points, const KMeansResult& clustering);

struct ClusterChoice {
    KMeansResult clustering;
    std::size_t k = 1;
    double db_index = 0.0;   // 0 when k = 1
};

/// Chooses k by Davies-Bouldin over 2..min(k_max, n-1, distinct points).
/// k = 1 is used when n < 4 or when every point coincides. Candidates that
/// contain a singleton cluster are skipped unless nothing else is available.
ClusterChoice choose_clusters(const EmbeddingSet& points, std::size_t k_max, std::uint64_t seed);

/// Groups of point indices from a clustering, ordered by their smallest member.
std::vector<std::vector<std::size_t>> cluster_members(const KMeansResult& clustering);

} // namespace shiftex
