#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcen/model_selection.hpp"

namespace mcen {

enum class Method { mcen, tmcen, sen };

const char* to_string(Method method);
Method method_from_string(const std::string& name);

/// Data-generating design. Responses come in three clusters of five; the
/// coefficient layout needs p = 12 or p >= 30 unless `B_star` is given.
struct SimDesign {
    ResponseKind kind = ResponseKind::gaussian;
    Index n = 100;
    Index p = 12;
    Index n_test = 1000;
    double eta = 1.0;
    double lambda = 0.02;
    double rho = 0.7;
    int replications = 10;
    std::uint64_t seed = 1;
    std::optional<Matrix> B_star;  // overrides make_coefficients (slopes only)

    /// Desk scale: 10 replications, p = 12. Paper scale: 50 replications, p = 300.
    static SimDesign desk(ResponseKind kind);
    static SimDesign paper(ResponseKind kind);
};

/// Column block q of the truth: rows carry eta - lambda, eta, eta + lambda,
/// eta + 2 lambda, eta + 3 lambda across its five responses. Blocks are 4 rows
/// (p = 12) or 10 rows followed by zero rows (p >= 30). UnsupportedP otherwise.
Matrix make_coefficients(double eta, double lambda, Index p);

/// Responses 0-4, 5-9 and 10-14 form the three true clusters.
ClusterPartition true_partition();

/// Compound-symmetric block of size min(p, 12) with correlation rho, identity elsewhere.
Matrix covariate_covariance(Index p, double rho);

struct SimData {
    Matrix X, Y;            // training rows
    Matrix X_test, Y_test;  // held-out rows
    Matrix B_star;          // p x r slopes (intercepts are zero)
    Matrix Pi_test;         // true probabilities on the test rows (binomial)
};

/// Training rows are drawn first, then test rows, from one generator seeded with `seed`.
SimData gen_gaussian(const SimDesign& design, std::uint64_t seed);
SimData gen_binomial(const SimDesign& design, std::uint64_t seed);
SimData generate(const SimDesign& design, std::uint64_t seed);

/// Mean squared difference over all entries.
double aspe(const Matrix& Y_pred, const Matrix& Y_test);
/// Sum of squared coefficient differences.
double mse_coef(const Matrix& B_hat, const Matrix& B_star);

struct SelectionCounts {
    long tv = 0;  // selected and truly nonzero
    long fv = 0;  // selected but truly zero
};
SelectionCounts tv_fv(const Matrix& B_hat, const Matrix& B_star);

/// (1/n) sum_i sum_k Bernoulli KL(pi_hat || pi_star).
double kl_divergence(const Matrix& Pi_hat, const Matrix& Pi_star);

/// Tuning grids and solver settings used inside each replication.
struct SimProtocol {
    std::vector<int> Q_values{2, 3, 4};
    std::vector<double> gamma_values{0.0, 0.25, 0.5, 1.0, 2.0};
    int delta_count = 100;
    int K = 10;
    FitSettings gaussian;
    BinomialFitSettings binomial;

    /// Desk: K = 5, 20 delta values. Paper: K = 10, 100 delta values. Binomial
    /// gamma values are multiplied by n because that criterion sums the
    /// log-likelihood over rows instead of averaging it.
    static SimProtocol desk(ResponseKind kind, Index n);
    static SimProtocol paper(ResponseKind kind, Index n);
};

struct MetricRecord {
    Method method;
    int replication;
    std::string metric;
    double value;
};

struct ReplicationFailure {
    Method method;
    int replication;
    std::string message;
};

struct MetricSummary {
    double q1 = 0, median = 0, q3 = 0, mean = 0;
    int count = 0;
};

struct SimResult {
    std::vector<MetricRecord> records;
    std::vector<ReplicationFailure> failures;
    // Selected partitions of MCEN per replication (canonical, 0-based).
    std::vector<std::optional<ClusterPartition>> mcen_partitions;
    std::vector<std::optional<TuningTriple>> mcen_triples;

    /// Quartiles use linear interpolation between order statistics.
    std::map<std::string, std::map<std::string, MetricSummary>> summary() const;
    std::vector<double> values(Method method, const std::string& metric) const;
};

/// One replication of every requested method on data seeded with seed + index.
void run_replication(const SimDesign& design, const std::vector<Method>& methods,
                     const SimProtocol& protocol, int index, SimResult& out);

SimResult run_replications(const SimDesign& design, const std::vector<Method>& methods,
                           const SimProtocol& protocol);

double quantile(std::vector<double> values, double prob);

}  // namespace mcen
