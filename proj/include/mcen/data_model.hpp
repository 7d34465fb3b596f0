#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "mcen/errors.hpp"

namespace mcen {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ResponseKind { gaussian, binomial };

const char* to_string(ResponseKind kind);
ResponseKind response_kind_from_string(const std::string& name);

/// Covariates after centering and scaling. Solvers assume every column sums
/// to zero and has squared norm at most n.
class DesignMatrix {
public:
    DesignMatrix() = default;
    explicit DesignMatrix(Matrix values) : values_(std::move(values)) {}

    const Matrix& values() const { return values_; }
    Index n() const { return values_.rows(); }
    Index p() const { return values_.cols(); }

private:
    Matrix values_;
};

/// n×r responses. Binomial responses must be 0/1; the constructor checks it.
class ResponseMatrix {
public:
    ResponseMatrix() = default;
    ResponseMatrix(Matrix values, ResponseKind kind);

    const Matrix& values() const { return values_; }
    ResponseKind kind() const { return kind_; }
    Index n() const { return values_.rows(); }
    Index r() const { return values_.cols(); }

private:
    Matrix values_;
    ResponseKind kind_ = ResponseKind::gaussian;
};

/// p×r (Gaussian) or (p+1)×r (binomial, row 0 = intercepts) coefficients.
/// Column k belongs to response k.
struct CoefficientMatrix {
    Matrix values;
    bool has_intercept_row = false;
};

/// A partition of the r responses into Q non-empty clusters. Labels are
/// 0-based internally; serialized forms use 1-based labels.
class ClusterPartition {
public:
    ClusterPartition() = default;
    /// Throws InvalidArgument if a label is outside [0, Q) or a cluster is empty.
    ClusterPartition(std::vector<int> assignments, int Q);

    static ClusterPartition single_cluster(int r);
    static ClusterPartition singletons(int r);

    const std::vector<int>& assignments() const { return assignments_; }
    int Q() const { return Q_; }
    int r() const { return static_cast<int>(assignments_.size()); }
    int cluster_of(int k) const { return assignments_.at(static_cast<std::size_t>(k)); }

    /// Response indices in cluster q, ascending. Throws IndexOutOfRange.
    std::vector<int> members(int q) const;
    std::vector<std::vector<int>> all_members() const;

    /// Labels relabelled by order of first appearance.
    ClusterPartition canonical() const;
    /// Label-invariant equality.
    bool same_partition(const ClusterPartition& other) const;

    bool operator==(const ClusterPartition& other) const = default;

private:
    std::vector<int> assignments_;
    int Q_ = 0;
};

std::vector<int> partition_members(const ClusterPartition& D, int q);
ClusterPartition canonical_form(const ClusterPartition& D);

/// Per-column affine maps between raw and standardized scales.
struct Standardizer {
    Vector x_center;
    Vector x_scale;
    Vector y_center;
    Vector y_scale;

    Matrix transform_x(const Matrix& X_raw) const;
    Matrix inverse_x(const Matrix& X) const;
    Matrix transform_y(const Matrix& Y_raw) const;
    Matrix inverse_y(const Matrix& Y) const;
};

struct TuningTriple {
    int Q = 1;
    double gamma = 0.0;
    double delta = 0.0;

    /// Throws InvalidArgument unless Q >= 1, gamma >= 0 and delta >= 0.
    void validate() const;
    bool operator==(const TuningTriple&) const = default;
};

struct StandardizedData {
    DesignMatrix X;
    ResponseMatrix Y;
    Standardizer standardizer;
};

/// Centers X and scales every column to squared norm n. Gaussian responses are
/// centered and scaled to unit (population) standard deviation; binomial
/// responses are validated and left as they are.
StandardizedData standardize(const Matrix& X_raw, const Matrix& Y_raw, ResponseKind kind);

}  // namespace mcen
