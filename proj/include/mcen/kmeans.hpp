#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mcen/data_model.hpp"

namespace mcen {

struct KMeansSettings {
    int restarts = 20;
    int max_iters = 100;
    std::uint64_t seed = 0;
};

struct KMeansResult {
    ClusterPartition partition;
    double wcss = 0.0;         // within-cluster sum of squares
    bool degenerate = false;   // fewer distinct points than Q
};

/// Within-cluster sum of squares of the columns of `points`.
double within_cluster_ss(const Matrix& points, const ClusterPartition& D);

/// sum_q 1/|D_q| sum_{l,m in D_q} ||v_l - v_m||^2 (ordered pairs), which is
/// 2 * within_cluster_ss.
double pairwise_objective(const Matrix& points, const ClusterPartition& D);

/// Lloyd iterations starting from the centroids of `start`. When `wcss_trace`
/// is given it receives the objective of the start and of every iterate.
ClusterPartition lloyd(const Matrix& points, const ClusterPartition& start, int max_iters,
                       std::vector<double>* wcss_trace = nullptr);

/// k-means on the columns of `points` with k-means++ restarts. If `previous`
/// is supplied it is refined as an additional start, so the result never has
/// a larger objective than `previous`.
KMeansResult kmeans(const Matrix& points, int Q, const KMeansSettings& settings,
                    const std::optional<ClusterPartition>& previous = std::nullopt);

/// Clusters the fitted-value vectors X b_1, ..., X b_r into Q groups.
KMeansResult cluster_fitted(const Matrix& X, const Matrix& B, int Q, const KMeansSettings& settings,
                            const std::optional<ClusterPartition>& previous = std::nullopt);

}  // namespace mcen
