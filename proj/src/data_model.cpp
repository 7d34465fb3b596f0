#include "mcen/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mcen {

const char* to_string(ResponseKind kind) {
    return kind == ResponseKind::gaussian ? "gaussian" : "binomial";
}

ResponseKind response_kind_from_string(const std::string& name) {
    if (name == "gaussian") return ResponseKind::gaussian;
    if (name == "binomial") return ResponseKind::binomial;
    throw Error(ErrorKind::InvalidArgument, "unknown response kind '" + name + "'");
}

ResponseMatrix::ResponseMatrix(Matrix values, ResponseKind kind)
    : values_(std::move(values)), kind_(kind) {
    if (kind_ == ResponseKind::binomial) {
        for (Index k = 0; k < values_.cols(); ++k)
            for (Index i = 0; i < values_.rows(); ++i) {
                const double v = values_(i, k);
                if (v != 0.0 && v != 1.0)
                    throw Error(ErrorKind::InvalidArgument,
                                "binomial response entry (" + std::to_string(i) + "," +
                                    std::to_string(k) + ") is not 0 or 1");
            }
    }
}

ClusterPartition::ClusterPartition(std::vector<int> assignments, int Q)
    : assignments_(std::move(assignments)), Q_(Q) {
    if (Q_ < 1) throw Error(ErrorKind::InvalidArgument, "partition needs Q >= 1");
    std::vector<int> counts(static_cast<std::size_t>(Q_), 0);
    for (int a : assignments_) {
        if (a < 0 || a >= Q_)
            throw Error(ErrorKind::InvalidArgument,
                        "cluster label " + std::to_string(a) + " outside [0," +
                            std::to_string(Q_) + ")");
        ++counts[static_cast<std::size_t>(a)];
    }
    for (int q = 0; q < Q_; ++q)
        if (counts[static_cast<std::size_t>(q)] == 0)
            throw Error(ErrorKind::InvalidArgument, "cluster " + std::to_string(q) + " is empty");
}

ClusterPartition ClusterPartition::single_cluster(int r) {
    return ClusterPartition(std::vector<int>(static_cast<std::size_t>(r), 0), 1);
}

ClusterPartition ClusterPartition::singletons(int r) {
    std::vector<int> a(static_cast<std::size_t>(r));
    for (int k = 0; k < r; ++k) a[static_cast<std::size_t>(k)] = k;
    return ClusterPartition(std::move(a), r);
}

std::vector<int> ClusterPartition::members(int q) const {
    if (q < 0 || q >= Q_)
        throw Error(ErrorKind::IndexOutOfRange,
                    "cluster " + std::to_string(q) + " with Q=" + std::to_string(Q_));
    std::vector<int> out;
    for (int k = 0; k < r(); ++k)
        if (assignments_[static_cast<std::size_t>(k)] == q) out.push_back(k);
    return out;
}

std::vector<std::vector<int>> ClusterPartition::all_members() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(Q_));
    for (int k = 0; k < r(); ++k) out[static_cast<std::size_t>(assignments_[static_cast<std::size_t>(k)])].push_back(k);
    return out;
}

ClusterPartition ClusterPartition::canonical() const {
    std::vector<int> relabel(static_cast<std::size_t>(Q_), -1);
    std::vector<int> out(assignments_.size());
    int next = 0;
    for (std::size_t k = 0; k < assignments_.size(); ++k) {
        int& target = relabel[static_cast<std::size_t>(assignments_[k])];
        if (target < 0) target = next++;
        out[k] = target;
    }
    return ClusterPartition(std::move(out), Q_);
}

bool ClusterPartition::same_partition(const ClusterPartition& other) const {
    return canonical() == other.canonical();
}

std::vector<int> partition_members(const ClusterPartition& D, int q) { return D.members(q); }

ClusterPartition canonical_form(const ClusterPartition& D) { return D.canonical(); }

Matrix Standardizer::transform_x(const Matrix& X_raw) const {
    if (X_raw.cols() != x_center.size())
        throw Error(ErrorKind::DimensionMismatch,
                    "expected " + std::to_string(x_center.size()) + " covariates, got " +
                        std::to_string(X_raw.cols()));
    return (X_raw.rowwise() - x_center.transpose()).array().rowwise() /
           x_scale.transpose().array();
}

Matrix Standardizer::inverse_x(const Matrix& X) const {
    return (X.array().rowwise() * x_scale.transpose().array()).matrix().rowwise() +
           x_center.transpose();
}

Matrix Standardizer::transform_y(const Matrix& Y_raw) const {
    if (Y_raw.cols() != y_center.size())
        throw Error(ErrorKind::DimensionMismatch, "response column count mismatch");
    return (Y_raw.rowwise() - y_center.transpose()).array().rowwise() /
           y_scale.transpose().array();
}

Matrix Standardizer::inverse_y(const Matrix& Y) const {
    if (Y.cols() != y_center.size())
        throw Error(ErrorKind::DimensionMismatch, "response column count mismatch");
    return (Y.array().rowwise() * y_scale.transpose().array()).matrix().rowwise() +
           y_center.transpose();
}

void TuningTriple::validate() const {
    if (Q < 1) throw Error(ErrorKind::InvalidArgument, "Q must be >= 1");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
        throw Error(ErrorKind::InvalidArgument, "gamma must be a finite nonnegative number");
    if (!(delta >= 0.0) || !std::isfinite(delta))
        throw Error(ErrorKind::InvalidArgument, "delta must be a finite nonnegative number");
}

namespace {

// Population moments; a column counts as constant when its spread is below
// round-off relative to its magnitude.
void column_moments(const Matrix& M, Index j, double& mean, double& sd) {
    const Index n = M.rows();
    mean = M.col(j).mean();
    const double ss = (M.col(j).array() - mean).square().sum();
    sd = std::sqrt(ss / static_cast<double>(n));
}

bool is_constant(const Matrix& M, Index j, double sd) {
    const double magnitude = std::max(1.0, M.col(j).cwiseAbs().maxCoeff());
    return !(sd > 1e-12 * magnitude);
}

}  // namespace

StandardizedData standardize(const Matrix& X_raw, const Matrix& Y_raw, ResponseKind kind) {
    const Index n = X_raw.rows();
    if (Y_raw.rows() != n)
        throw Error(ErrorKind::DimensionMismatch,
                    "X has " + std::to_string(n) + " rows but Y has " +
                        std::to_string(Y_raw.rows()));
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 observations");
    if (!X_raw.allFinite() || !Y_raw.allFinite())
        throw Error(ErrorKind::InvalidArgument, "non-finite value in input");

    const Index p = X_raw.cols();
    const Index r = Y_raw.cols();
    Standardizer s;
    s.x_center.resize(p);
    s.x_scale.resize(p);
    for (Index j = 0; j < p; ++j) {
        double mean = 0.0, sd = 0.0;
        column_moments(X_raw, j, mean, sd);
        if (is_constant(X_raw, j, sd))
            throw Error(ErrorKind::ZeroVarianceColumn, "covariate column " + std::to_string(j));
        s.x_center[j] = mean;
        s.x_scale[j] = sd;
    }

    s.y_center = Vector::Zero(r);
    s.y_scale = Vector::Ones(r);
    if (kind == ResponseKind::gaussian) {
        for (Index k = 0; k < r; ++k) {
            double mean = 0.0, sd = 0.0;
            column_moments(Y_raw, k, mean, sd);
            s.y_center[k] = mean;
            // A constant response is only centered.
            s.y_scale[k] = is_constant(Y_raw, k, sd) ? 1.0 : sd;
        }
    }

    Matrix X = s.transform_x(X_raw);
    Matrix Y = kind == ResponseKind::gaussian ? s.transform_y(Y_raw) : Y_raw;
    return StandardizedData{DesignMatrix(std::move(X)), ResponseMatrix(std::move(Y), kind),
                            std::move(s)};
}

}  // namespace mcen
