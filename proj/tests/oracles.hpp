#pragma once

// Test-only reference routines. Nothing here calls into the library's
// solvers; each oracle takes an independent route to the same answer.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Matrix M(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = z(rng);
    return M;
}

/// Centered columns scaled to squared norm n.
inline Matrix standardized_normal(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng) {
    Matrix X = normal_matrix(n, p, rng);
    for (Eigen::Index j = 0; j < p; ++j) {
        X.col(j).array() -= X.col(j).mean();
        X.col(j) *= std::sqrt(static_cast<double>(n)) / X.col(j).norm();
    }
    return X;
}

inline Matrix centered(Matrix M) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) M.col(j).array() -= M.col(j).mean();
    return M;
}

inline double soft(double a, double b) { return a > b ? a - b : (a < -b ? a + b : 0.0); }

/// Residual-updating coordinate descent for
/// 1/(2n)||y - X b||^2 + l1 ||b||_1 + ridge ||b||^2.
inline Vector elastic_net(const Matrix& X, const Vector& y, double l1, double ridge,
                          double tol = 1e-13, int max_sweeps = 200000) {
    const double n = static_cast<double>(X.rows());
    Vector b = Vector::Zero(X.cols());
    Vector resid = y;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double worst = 0.0;
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            const double xx = X.col(j).squaredNorm() / n;
            const double z = X.col(j).dot(resid) / n + xx * b[j];
            const double next = soft(z, l1) / (xx + 2.0 * ridge);
            const double d = next - b[j];
            if (d != 0.0) {
                resid -= d * X.col(j);
                b[j] = next;
            }
            worst = std::max(worst, std::abs(d));
        }
        if (worst < tol) break;
    }
    return b;
}

/// Golden-section search for a unimodal function on [lo, hi].
inline double golden_min(const std::function<double(double)>& f, double lo, double hi,
                         double tol = 1e-12) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

/// The Gaussian cluster-elastic-net objective written out term by term.
inline double gaussian_objective(const Matrix& B, const Matrix& X, const Matrix& Y,
                                 const std::vector<int>& labels, double gamma, double delta) {
    const double n = static_cast<double>(X.rows());
    double value = 0.0;
    for (Eigen::Index c = 0; c < Y.cols(); ++c) value += (Y.col(c) - X * B.col(c)).squaredNorm();
    value /= 2.0 * n;
    value += delta / 2.0 * B.cwiseAbs().sum();
    int Q = 0;
    for (int l : labels) Q = std::max(Q, l + 1);
    for (int q = 0; q < Q; ++q) {
        std::vector<int> members;
        for (std::size_t k = 0; k < labels.size(); ++k)
            if (labels[k] == q) members.push_back(static_cast<int>(k));
        double pairs = 0.0;
        for (int l : members)
            for (int m : members) pairs += (X * (B.col(l) - B.col(m))).squaredNorm();
        if (!members.empty()) value += gamma / (2.0 * n) * pairs / static_cast<double>(members.size());
    }
    return value;
}

/// All label vectors (restricted growth strings) splitting r items into exactly Q blocks.
inline std::vector<std::vector<int>> set_partitions(int r, int Q) {
    std::vector<std::vector<int>> out;
    std::vector<int> a(static_cast<std::size_t>(r), 0);
    std::function<void(int, int)> rec = [&](int i, int used) {
        if (i == r) {
            if (used == Q) out.push_back(a);
            return;
        }
        for (int v = 0; v <= std::min(used, Q - 1); ++v) {
            a[static_cast<std::size_t>(i)] = v;
            rec(i + 1, std::max(used, v + 1));
        }
    };
    rec(0, 0);
    return out;
}

/// Sum of squared distances to cluster means of the columns of V.
inline double wcss(const Matrix& V, const std::vector<int>& labels, int Q) {
    double total = 0.0;
    for (int q = 0; q < Q; ++q) {
        Vector mean = Vector::Zero(V.rows());
        int count = 0;
        for (std::size_t k = 0; k < labels.size(); ++k)
            if (labels[k] == q) {
                mean += V.col(static_cast<Eigen::Index>(k));
                ++count;
            }
        if (count == 0) continue;
        mean /= count;
        for (std::size_t k = 0; k < labels.size(); ++k)
            if (labels[k] == q) total += (V.col(static_cast<Eigen::Index>(k)) - mean).squaredNorm();
    }
    return total;
}

inline double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Logistic negative log-likelihood of theta (row 0 intercept) on design U.
inline double logistic_nll(const Matrix& U, const Vector& y, const Vector& theta) {
    const Vector eta = U * theta;
    double v = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) v += log1pexp(eta[i]) - y[i] * eta[i];
    return v;
}

/// FISTA on NLL + l1 ||t_{-1}||_1 + (ridge/2)||t_{-1}||^2 with the exact
/// likelihood (no IRLS).
inline Vector penalized_logistic(const Matrix& U, const Vector& y, double l1, double ridge,
                                 int iters = 200000, double tol = 1e-13) {
    const Eigen::Index d = U.cols();
    Eigen::JacobiSVD<Matrix> svd(U);
    const double L = 0.25 * svd.singularValues()[0] * svd.singularValues()[0] + ridge;
    const double step = 1.0 / L;
    Vector x = Vector::Zero(d), x_prev = x, v = x;
    double t = 1.0;
    for (int it = 0; it < iters; ++it) {
        const Vector eta = U * v;
        Vector mu(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = 1.0 / (1.0 + std::exp(-eta[i]));
        Vector grad = U.transpose() * (mu - y);
        grad.tail(d - 1) += ridge * v.tail(d - 1);
        Vector next = v - step * grad;
        for (Eigen::Index j = 1; j < d; ++j) next[j] = soft(next[j], step * l1);
        x_prev = x;
        x = next;
        const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
        v = x + ((t - 1.0) / t_next) * (x - x_prev);
        t = t_next;
        if ((x - x_prev).cwiseAbs().maxCoeff() < tol) break;
    }
    return x;
}

}  // namespace oracle
