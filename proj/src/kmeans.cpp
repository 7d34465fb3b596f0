#include "mcen/kmeans.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <omp.h>

#include "mcen/parallel.hpp"

namespace mcen {

namespace {

Matrix centroids_of(const Matrix& points, const std::vector<int>& assign, int Q) {
    Matrix C = Matrix::Zero(points.rows(), Q);
    std::vector<int> counts(static_cast<std::size_t>(Q), 0);
    for (Index i = 0; i < points.cols(); ++i) {
        const int a = assign[static_cast<std::size_t>(i)];
        C.col(a) += points.col(i);
        ++counts[static_cast<std::size_t>(a)];
    }
    for (int q = 0; q < Q; ++q)
        if (counts[static_cast<std::size_t>(q)] > 0) C.col(q) /= counts[static_cast<std::size_t>(q)];
    return C;
}

double wcss_of(const Matrix& points, const std::vector<int>& assign, const Matrix& C) {
    double total = 0.0;
    for (Index i = 0; i < points.cols(); ++i)
        total += (points.col(i) - C.col(assign[static_cast<std::size_t>(i)])).squaredNorm();
    return total;
}

// Nearest centroid, lowest index on ties.
std::vector<int> assign_nearest(const Matrix& points, const Matrix& C) {
    std::vector<int> assign(static_cast<std::size_t>(points.cols()));
    for (Index i = 0; i < points.cols(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index q = 0; q < C.cols(); ++q) {
            const double d = (points.col(i) - C.col(q)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(q);
            }
        }
        assign[static_cast<std::size_t>(i)] = best;
    }
    return assign;
}

// Fills every empty cluster with the point farthest from its centroid, taken
// from a cluster that still has more than one member.
void repair_empty(const Matrix& points, const Matrix& C, std::vector<int>& assign, int Q) {
    std::vector<int> counts(static_cast<std::size_t>(Q), 0);
    for (int a : assign) ++counts[static_cast<std::size_t>(a)];
    std::vector<bool> moved(assign.size(), false);
    for (int e = 0; e < Q; ++e) {
        if (counts[static_cast<std::size_t>(e)] > 0) continue;
        Index far = -1;
        double far_d = -1.0;
        for (Index i = 0; i < points.cols(); ++i) {
            const int a = assign[static_cast<std::size_t>(i)];
            if (counts[static_cast<std::size_t>(a)] <= 1 || moved[static_cast<std::size_t>(i)]) continue;
            const double d = (points.col(i) - C.col(a)).squaredNorm();
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
        assign[static_cast<std::size_t>(far)] = e;
        moved[static_cast<std::size_t>(far)] = true;
        ++counts[static_cast<std::size_t>(e)];
    }
}

struct Candidate {
    std::vector<int> assign;
    double wcss = std::numeric_limits<double>::infinity();
};

Candidate run_lloyd(const Matrix& points, std::vector<int> assign, int Q, int max_iters,
                    std::vector<double>* trace) {
    Matrix C = centroids_of(points, assign, Q);
    double current = wcss_of(points, assign, C);
    if (trace) trace->push_back(current);
    for (int it = 0; it < max_iters; ++it) {
        std::vector<int> next = assign_nearest(points, C);
        repair_empty(points, C, next, Q);
        const bool unchanged = next == assign;
        assign = std::move(next);
        C = centroids_of(points, assign, Q);
        current = wcss_of(points, assign, C);
        if (trace) trace->push_back(current);
        if (unchanged) break;
    }
    return {std::move(assign), current};
}

std::vector<int> kmeanspp_start(const Matrix& points, int Q, std::mt19937_64& rng) {
    const Index r = points.cols();
    std::vector<Index> centers;
    std::vector<bool> chosen(static_cast<std::size_t>(r), false);
    std::uniform_int_distribution<Index> first(0, r - 1);
    centers.push_back(first(rng));
    chosen[static_cast<std::size_t>(centers.back())] = true;
    std::vector<double> d2(static_cast<std::size_t>(r));
    while (static_cast<int>(centers.size()) < Q) {
        double total = 0.0;
        for (Index i = 0; i < r; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (Index c : centers) best = std::min(best, (points.col(i) - points.col(c)).squaredNorm());
            d2[static_cast<std::size_t>(i)] = chosen[static_cast<std::size_t>(i)] ? 0.0 : best;
            total += d2[static_cast<std::size_t>(i)];
        }
        Index pick = -1;
        if (total > 0.0) {
            const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            double acc = 0.0;
            for (Index i = 0; i < r; ++i) {
                acc += d2[static_cast<std::size_t>(i)];
                if (d2[static_cast<std::size_t>(i)] > 0.0 && u < acc) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0)
                for (Index i = r - 1; i >= 0; --i)
                    if (d2[static_cast<std::size_t>(i)] > 0.0) {
                        pick = i;
                        break;
                    }
        } else {
            // Only duplicates remain: pick uniformly among unchosen points.
            std::vector<Index> rest;
            for (Index i = 0; i < r; ++i)
                if (!chosen[static_cast<std::size_t>(i)]) rest.push_back(i);
            pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
        }
        centers.push_back(pick);
        chosen[static_cast<std::size_t>(pick)] = true;
    }
    Matrix C(points.rows(), Q);
    for (int q = 0; q < Q; ++q) C.col(q) = points.col(centers[static_cast<std::size_t>(q)]);
    std::vector<int> assign = assign_nearest(points, C);
    repair_empty(points, C, assign, Q);
    return assign;
}

int count_distinct(const Matrix& points) {
    int distinct = 0;
    for (Index i = 0; i < points.cols(); ++i) {
        bool seen = false;
        for (Index j = 0; j < i && !seen; ++j) seen = points.col(i) == points.col(j);
        if (!seen) ++distinct;
    }
    return distinct;
}

bool improves(double candidate, double incumbent) {
    if (!std::isfinite(incumbent)) return std::isfinite(candidate);
    return candidate < incumbent - 1e-12 * (1.0 + std::abs(incumbent));
}

}  // namespace

double within_cluster_ss(const Matrix& points, const ClusterPartition& D) {
    if (D.r() != points.cols()) throw Error(ErrorKind::DimensionMismatch, "partition size mismatch");
    return wcss_of(points, D.assignments(), centroids_of(points, D.assignments(), D.Q()));
}

double pairwise_objective(const Matrix& points, const ClusterPartition& D) {
    if (D.r() != points.cols()) throw Error(ErrorKind::DimensionMismatch, "partition size mismatch");
    double total = 0.0;
    for (const auto& members : D.all_members()) {
        double s = 0.0;
        for (int l : members)
            for (int m : members) s += (points.col(l) - points.col(m)).squaredNorm();
        total += s / static_cast<double>(members.size());
    }
    return total;
}

ClusterPartition lloyd(const Matrix& points, const ClusterPartition& start, int max_iters,
                       std::vector<double>* wcss_trace) {
    if (start.r() != points.cols()) throw Error(ErrorKind::DimensionMismatch, "partition size mismatch");
    Candidate c = run_lloyd(points, start.assignments(), start.Q(), max_iters, wcss_trace);
    return ClusterPartition(std::move(c.assign), start.Q());
}

KMeansResult kmeans(const Matrix& points, int Q, const KMeansSettings& settings,
                    const std::optional<ClusterPartition>& previous) {
    const int r = static_cast<int>(points.cols());
    if (Q < 1 || Q > r)
        throw Error(ErrorKind::InvalidArgument,
                    "Q=" + std::to_string(Q) + " must lie in [1, " + std::to_string(r) + "]");
    if (settings.restarts < 1 || settings.max_iters < 1)
        throw Error(ErrorKind::InvalidArgument, "k-means needs restarts >= 1 and max_iters >= 1");
    if (previous && (previous->r() != r || previous->Q() != Q))
        throw Error(ErrorKind::DimensionMismatch, "previous partition does not match (r, Q)");

    KMeansResult out;
    out.degenerate = count_distinct(points) < Q;
    if (Q == 1 || Q == r) {
        out.partition = Q == 1 ? ClusterPartition::single_cluster(r) : ClusterPartition::singletons(r);
        out.wcss = within_cluster_ss(points, out.partition);
        return out;
    }

    const int starts = settings.restarts;
    std::vector<Candidate> candidates(static_cast<std::size_t>(starts));
#pragma omp parallel for schedule(dynamic) num_threads(thread_budget()) if (starts > 1)
    for (int s = 0; s < starts; ++s) {
        std::seed_seq seq{static_cast<std::uint32_t>(settings.seed & 0xffffffffu),
                          static_cast<std::uint32_t>(settings.seed >> 32),
                          static_cast<std::uint32_t>(s)};
        std::mt19937_64 rng(seq);
        candidates[static_cast<std::size_t>(s)] =
            run_lloyd(points, kmeanspp_start(points, Q, rng), Q, settings.max_iters, nullptr);
    }

    Candidate best;
    if (previous) best = run_lloyd(points, previous->assignments(), Q, settings.max_iters, nullptr);
    for (auto& c : candidates)
        if (improves(c.wcss, best.wcss)) best = std::move(c);

    out.partition = ClusterPartition(std::move(best.assign), Q);
    out.wcss = best.wcss;
    return out;
}

KMeansResult cluster_fitted(const Matrix& X, const Matrix& B, int Q, const KMeansSettings& settings,
                            const std::optional<ClusterPartition>& previous) {
    if (X.cols() != B.rows()) throw Error(ErrorKind::DimensionMismatch, "X and B are not conformable");
    return kmeans(X * B, Q, settings, previous);
}

}  // namespace mcen
