#include "mcen/gaussian_cd.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "mcen/parallel.hpp"

namespace mcen {

GramCache GramCache::build(const Matrix& X, const Matrix& Y) {
    if (X.rows() != Y.rows()) throw Error(ErrorKind::DimensionMismatch, "X and Y row counts differ");
    const double n = static_cast<double>(X.rows());
    GramCache g;
    g.n = X.rows();
    g.R = X.transpose() * X / n;
    g.XtY = X.transpose() * Y / n;
    g.yty = Y.colwise().squaredNorm().transpose() / n;
    return g;
}

double soft_threshold(double a, double b) {
    if (a > b) return a - b;
    if (a < -b) return a + b;
    return 0.0;
}

namespace {

// Coefficients of the coordinate problem for a cluster of size m:
// own-column curvature multiplier and cross-column weight.
struct FusionWeights {
    double own;
    double cross;
};

FusionWeights fusion_weights(double gamma, int m) {
    const double md = static_cast<double>(m);
    return {1.0 + 2.0 * gamma * (md - 1.0) / md, 2.0 * gamma / md};
}

// Coordinate descent on one cluster. B holds the cluster's columns only;
// RB = R * B is kept current after every coordinate move.
class ClusterSolver {
public:
    ClusterSolver(const GramCache& gram, const std::vector<int>& members, double gamma,
                  double delta, Matrix B)
        : gram_(gram), members_(members), gamma_(gamma), threshold_(delta / 2.0),
          weights_(fusion_weights(gamma, static_cast<int>(members.size()))), B_(std::move(B)) {
        refresh();
    }

    void refresh() { RB_ = gram_.R * B_; }

    double update(Index j, Index c) {
        const double rjj = gram_.R(j, j);
        const double old = B_(j, c);
        if (!(rjj > 0.0)) return 0.0;
        const double cross = RB_.row(j).sum() - RB_(j, c);
        const Index k = members_[static_cast<std::size_t>(c)];
        const double rho =
            gram_.XtY(j, k) - weights_.own * (RB_(j, c) - rjj * old) + weights_.cross * cross;
        const double next = soft_threshold(rho, threshold_) / (rjj * weights_.own);
        const double change = next - old;
        if (change != 0.0) {
            B_(j, c) = next;
            RB_.col(c).noalias() += gram_.R.col(j) * change;
        }
        return std::abs(change);
    }

    double full_sweep() {
        refresh();
        double max_change = 0.0;
        for (Index j = 0; j < B_.rows(); ++j)
            for (Index c = 0; c < B_.cols(); ++c) max_change = std::max(max_change, update(j, c));
        return max_change;
    }

    double active_sweep() {
        double max_change = 0.0;
        for (Index j = 0; j < B_.rows(); ++j)
            for (Index c = 0; c < B_.cols(); ++c)
                if (B_(j, c) != 0.0) max_change = std::max(max_change, update(j, c));
        return max_change;
    }

    // The cluster's share of F, computed from the Gram quantities.
    double objective() const {
        double value = 0.0;
        const Index m = B_.cols();
        for (Index c = 0; c < m; ++c) {
            const Index k = members_[static_cast<std::size_t>(c)];
            value += 0.5 * gram_.yty[k] - B_.col(c).dot(gram_.XtY.col(k)) +
                     0.5 * B_.col(c).dot(RB_.col(c));
        }
        value += threshold_ * B_.cwiseAbs().sum();
        if (gamma_ != 0.0 && m > 1) {
            const Vector mean_b = B_.rowwise().mean();
            const Vector mean_rb = RB_.rowwise().mean();
            double fusion = 0.0;
            for (Index c = 0; c < m; ++c)
                fusion += (B_.col(c) - mean_b).dot(RB_.col(c) - mean_rb);
            value += gamma_ * fusion;
        }
        return value;
    }

    const Matrix& coefficients() const { return B_; }

private:
    const GramCache& gram_;
    const std::vector<int>& members_;
    double gamma_;
    double threshold_;
    FusionWeights weights_;
    Matrix B_;
    Matrix RB_;
};

struct ClusterOutcome {
    bool converged = false;
    int sweeps = 0;
    std::vector<double> trace;
};

ClusterOutcome run_cluster(ClusterSolver& solver, const SolverSettings& settings) {
    ClusterOutcome out;
    if (settings.record_objective) out.trace.push_back(solver.objective());
    auto record = [&] {
        ++out.sweeps;
        if (settings.record_objective) out.trace.push_back(solver.objective());
    };
    while (out.sweeps < settings.max_sweeps) {
        const double full_change = solver.full_sweep();
        record();
        if (full_change < settings.tol) {
            out.converged = true;
            break;
        }
        if (!settings.active_set) continue;
        while (out.sweeps < settings.max_sweeps) {
            const double change = solver.active_sweep();
            record();
            if (change < settings.tol) break;
        }
    }
    return out;
}

void check_shapes(const GramCache& gram, const ClusterPartition& D, const Matrix& init) {
    if (D.r() != gram.r())
        throw Error(ErrorKind::DimensionMismatch, "partition size differs from response count");
    if (init.rows() != gram.p() || init.cols() != gram.r())
        throw Error(ErrorKind::DimensionMismatch, "initial coefficients have the wrong shape");
}

}  // namespace

double cd_update(Index j, Index k, const Matrix& B, const ClusterPartition& D,
                 const GramCache& gram, double gamma, double delta) {
    check_shapes(gram, D, B);
    const std::vector<int> members = D.members(D.cluster_of(static_cast<int>(k)));
    const FusionWeights w = fusion_weights(gamma, static_cast<int>(members.size()));
    const double rjj = gram.R(j, j);
    const double own = gram.R.row(j).dot(B.col(k)) - rjj * B(j, k);
    double cross = 0.0;
    for (int s : members)
        if (s != k) cross += gram.R.row(j).dot(B.col(s));
    const double rho = gram.XtY(j, k) - w.own * own + w.cross * cross;
    return soft_threshold(rho, delta / 2.0) / (rjj * w.own);
}

FixedGroupResult solve_fixed_groups(const GramCache& gram, const ClusterPartition& D,
                                    double gamma, double delta, const Matrix& init,
                                    const SolverSettings& settings) {
    check_shapes(gram, D, init);
    if (!(settings.tol > 0.0) || settings.max_sweeps < 1)
        throw Error(ErrorKind::InvalidArgument, "solver needs tol > 0 and max_sweeps >= 1");

    const auto clusters = D.all_members();
    const int Q = D.Q();
    FixedGroupResult result;
    result.B = init;
    result.cluster_objective_traces.resize(static_cast<std::size_t>(Q));
    std::vector<ClusterOutcome> outcomes(static_cast<std::size_t>(Q));

#pragma omp parallel for schedule(dynamic) num_threads(thread_budget()) if (Q > 1)
    for (int q = 0; q < Q; ++q) {
        const auto& members = clusters[static_cast<std::size_t>(q)];
        Matrix block(gram.p(), static_cast<Index>(members.size()));
        for (std::size_t c = 0; c < members.size(); ++c)
            block.col(static_cast<Index>(c)) = init.col(members[c]);
        ClusterSolver solver(gram, members, gamma, delta, std::move(block));
        outcomes[static_cast<std::size_t>(q)] = run_cluster(solver, settings);
        for (std::size_t c = 0; c < members.size(); ++c)
            result.B.col(members[c]) = solver.coefficients().col(static_cast<Index>(c));
    }

    for (int q = 0; q < Q; ++q) {
        auto& o = outcomes[static_cast<std::size_t>(q)];
        result.converged = result.converged && o.converged;
        result.sweeps = std::max(result.sweeps, o.sweeps);
        result.cluster_objective_traces[static_cast<std::size_t>(q)] = std::move(o.trace);
    }
    return result;
}

FixedGroupResult solve_fixed_groups(const DesignMatrix& X, const ResponseMatrix& Y,
                                    const ClusterPartition& D, double gamma, double delta,
                                    const Matrix& init, const SolverSettings& settings) {
    return solve_fixed_groups(GramCache::build(X.values(), Y.values()), D, gamma, delta, init,
                              settings);
}

Matrix closed_form_delta0(const Matrix& X, const Matrix& Y, const ClusterPartition& D,
                          double gamma) {
    if (X.rows() != Y.rows()) throw Error(ErrorKind::DimensionMismatch, "X and Y row counts differ");
    if (D.r() != Y.cols()) throw Error(ErrorKind::DimensionMismatch, "partition size mismatch");
    if (X.rows() <= X.cols())
        throw Error(ErrorKind::SingularGram, "closed form needs n > p");
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    if (qr.rank() < X.cols()) throw Error(ErrorKind::SingularGram, "X^T X is not invertible");
    const Matrix ols = qr.solve(Y);
    return population_target(ols, D, gamma);
}

Matrix population_target(const Matrix& B_star, const ClusterPartition& D, double gamma) {
    if (D.r() != B_star.cols()) throw Error(ErrorKind::DimensionMismatch, "partition size mismatch");
    Matrix out = B_star;
    for (const auto& members : D.all_members()) {
        const double m = static_cast<double>(members.size());
        const double weight = 2.0 * gamma / ((1.0 + 2.0 * gamma) * m);
        for (int l : members) {
            Vector shift = Vector::Zero(B_star.rows());
            for (int c : members)
                if (c != l) shift += B_star.col(c) - B_star.col(l);
            out.col(l) = B_star.col(l) + weight * shift;
        }
    }
    return out;
}

namespace {

Matrix smooth_gradient(const Matrix& B, const Matrix& X, const Matrix& Y,
                       const ClusterPartition& D, double gamma) {
    const double n = static_cast<double>(X.rows());
    const Matrix XB = X * B;
    Matrix G = X.transpose() * (XB - Y) / n;
    if (gamma != 0.0) {
        for (const auto& members : D.all_members()) {
            Vector mean_fit = Vector::Zero(X.rows());
            for (int s : members) mean_fit += XB.col(s);
            mean_fit /= static_cast<double>(members.size());
            for (int k : members) G.col(k) += 2.0 * gamma * X.transpose() * (XB.col(k) - mean_fit) / n;
        }
    }
    return G;
}

}  // namespace

double kkt_residual(const Matrix& B, const Matrix& X, const Matrix& Y, const ClusterPartition& D,
                    double gamma, double delta) {
    const Matrix G = smooth_gradient(B, X, Y, D, gamma);
    const double thr = delta / 2.0;
    double worst = 0.0;
    for (Index k = 0; k < B.cols(); ++k)
        for (Index j = 0; j < B.rows(); ++j) {
            const double b = B(j, k);
            const double v = b != 0.0 ? std::abs(G(j, k) + thr * (b > 0.0 ? 1.0 : -1.0))
                                      : std::max(0.0, std::abs(G(j, k)) - thr);
            worst = std::max(worst, v);
        }
    return worst;
}

double delta_max(const Matrix& X, const Matrix& Y) {
    if (X.rows() != Y.rows()) throw Error(ErrorKind::DimensionMismatch, "X and Y row counts differ");
    if (X.size() == 0 || Y.size() == 0) return 0.0;
    return 2.0 * (X.transpose() * Y).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

double objective(const Matrix& B, const Matrix& X, const Matrix& Y, const ClusterPartition& D,
                 double gamma, double delta) {
    const double n = static_cast<double>(X.rows());
    const Matrix XB = X * B;
    double value = (Y - XB).squaredNorm() / (2.0 * n) + 0.5 * delta * B.cwiseAbs().sum();
    if (gamma != 0.0) {
        double fusion = 0.0;
        for (const auto& members : D.all_members()) {
            double pairs = 0.0;
            for (int l : members)
                for (int m : members) pairs += (XB.col(l) - XB.col(m)).squaredNorm();
            fusion += pairs / static_cast<double>(members.size());
        }
        value += gamma / (2.0 * n) * fusion;
    }
    return value;
}

}  // namespace mcen
