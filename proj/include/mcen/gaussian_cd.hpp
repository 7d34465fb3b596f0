#pragma once

#include <vector>

#include "mcen/data_model.hpp"

namespace mcen {

// Fixed-partition solver for the Gaussian cluster elastic net.
//
// Objective minimized, for a partition D of the responses:
//
//   F(B) = 1/(2n) sum_c ||y_c - X b_c||^2 + (delta/2) ||B||_1
//        + gamma/(2n) sum_q 1/|D_q| sum_{l,m in D_q} ||X (b_l - b_m)||^2
//
// where the inner sum runs over ordered pairs. With this scaling the
// all-zero solution is optimal for gamma = 0 exactly when
// delta >= 2 max_{j,k} |X_j^T y_k / n|.

/// R = X^T X / n, X^T Y / n and y_k^T y_k / n.
struct GramCache {
    Matrix R;
    Matrix XtY;
    Vector yty;
    Index n = 0;

    static GramCache build(const Matrix& X, const Matrix& Y);
    Index p() const { return R.rows(); }
    Index r() const { return XtY.cols(); }
};

struct SolverSettings {
    double tol = 1e-7;       // max absolute coefficient change per sweep
    int max_sweeps = 10000;
    bool active_set = true;
    bool record_objective = false;
};

struct FixedGroupResult {
    Matrix B;
    bool converged = true;
    int sweeps = 0;  // largest sweep count over clusters
    // One trace per cluster: the cluster's share of F after every sweep,
    // preceded by its value at the initial point.
    std::vector<std::vector<double>> cluster_objective_traces;
};

/// sign(a) * max(0, |a| - b); exactly 0 when |a| == b.
double soft_threshold(double a, double b);

/// Coordinate minimizer of F in entry (j, k) with all other entries of B held.
double cd_update(Index j, Index k, const Matrix& B, const ClusterPartition& D,
                 const GramCache& gram, double gamma, double delta);

/// Runs coordinate descent per cluster (clusters are independent problems and
/// are solved concurrently). Non-convergence is reported through the result,
/// which still carries the last iterate.
FixedGroupResult solve_fixed_groups(const GramCache& gram, const ClusterPartition& D,
                                    double gamma, double delta, const Matrix& init,
                                    const SolverSettings& settings);

FixedGroupResult solve_fixed_groups(const DesignMatrix& X, const ResponseMatrix& Y,
                                    const ClusterPartition& D, double gamma, double delta,
                                    const Matrix& init, const SolverSettings& settings);

/// delta = 0 solution from per-response OLS fits. Requires n > p and a
/// nonsingular X^T X (SingularGram otherwise).
Matrix closed_form_delta0(const Matrix& X, const Matrix& Y, const ClusterPartition& D,
                          double gamma);

/// Shrinks each column of B_star toward its cluster mean by 2 gamma / (1 + 2 gamma).
Matrix population_target(const Matrix& B_star, const ClusterPartition& D, double gamma);

/// Largest violation of the subgradient optimality conditions of F.
double kkt_residual(const Matrix& B, const Matrix& X, const Matrix& Y, const ClusterPartition& D,
                    double gamma, double delta);

/// 2 max_{j,k} |X_j^T y_k / n|.
double delta_max(const Matrix& X, const Matrix& Y);

/// F(B) evaluated directly from X and Y.
double objective(const Matrix& B, const Matrix& X, const Matrix& Y, const ClusterPartition& D,
                 double gamma, double delta);

}  // namespace mcen
