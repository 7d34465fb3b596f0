#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcen/data_model.hpp"
#include "mcen/kmeans.hpp"

namespace mcen {

// Binomial responses with a logistic link. The design U = [1, X] carries an
// unpenalized intercept in row 0 of Theta. The minimized criterion is
//
//   P(Theta) = sum_k sum_i [log(1 + exp(u_i^T t_k)) - y_ik u_i^T t_k]
//            + (delta/2) ||Theta_{-1}||_1
//            + gamma/(4n) sum_q 1/|D_q| sum_{l,m in D_q} ||U (t_l - t_m)||^2,
//
// and each IRLS step minimizes its quadratic surrogate
//   1/2 sum w (z - U t)^2 + (same penalties)
// by proximal coordinate descent.

inline constexpr double kProbabilityClamp = 1e-5;
inline constexpr double kWeightFloor = 1e-5;
inline constexpr double kLinearPredictorClamp = 30.0;

/// exp(eta) / (1 + exp(eta)) without overflow.
double logistic(double eta);
double clamp_probability(double pi);

struct WorkingValue {
    double z;
    double w;
};

/// w = pi (1 - pi) (floored), z = logit(pi) + (y - pi) / w.
WorkingValue working_quantities(double y, double pi);

struct WorkingSet {
    Matrix Z;
    Matrix W;
    Matrix Pi;

    /// Working responses and weights at the linear predictor U * Theta.
    static WorkingSet compute(const Matrix& U, const Matrix& Y, const Matrix& Theta);
};

/// Prepends a column of ones.
Matrix design_with_intercept(const Matrix& X);

struct BinomialSolverSettings {
    double tol = 1e-7;        // inner coordinate change threshold
    int max_sweeps = 10000;   // inner sweeps per IRLS step
    double irls_tol = 1e-6;   // outer coefficient change threshold
    int max_irls = 100;
    int max_halvings = 10;
    bool record_inner_objective = false;
};

struct BinomialSolveResult {
    Matrix Theta;
    bool converged = true;
    int irls_iters = 0;
    // P at the start and after every accepted IRLS step.
    std::vector<double> nll_trace;
    // Surrogate objective per inner sweep, one list per (cluster, IRLS step).
    std::vector<std::vector<double>> inner_traces;
};

/// Minimizer of the surrogate in coordinate (j, k), j = 0 being the intercept.
double proximal_cd_update(Index j, Index k, const Matrix& Theta, const ClusterPartition& D,
                          const Matrix& U, const Matrix& W, const Matrix& Z, double gamma,
                          double delta);

/// P(Theta) as documented above.
double penalized_nll(const Matrix& Theta, const Matrix& U, const Matrix& Y,
                     const ClusterPartition& D, double gamma, double delta);

/// 1/2 sum w (z - U t)^2 plus both penalties.
double surrogate_objective(const Matrix& Theta, const Matrix& U, const WorkingSet& ws,
                           const ClusterPartition& D, double gamma, double delta);

/// IRLS with proximal coordinate descent at a fixed partition. Throws
/// SeparationDetected when the linear predictor stays beyond the clamp.
BinomialSolveResult solve_fixed_groups_binomial(const Matrix& U, const Matrix& Y,
                                                const ClusterPartition& D, double gamma,
                                                double delta, const Matrix& init,
                                                const BinomialSolverSettings& settings = {});

/// Separate elastic-net logistic fits:
/// NLL_k + (delta/2)||t_{-1}||_1 + (gamma/2)||t_{-1}||^2.
/// A constant response gets intercept logit of the clamped mean and zero slopes.
BinomialSolveResult sen_glm_init(const Matrix& U, const Matrix& Y, double gamma, double delta,
                                 const BinomialSolverSettings& settings = {},
                                 const Matrix* warm_start = nullptr);

/// 2 max_{j,k} |X_j^T (y_k - mean(y_k))| for centered X.
double delta_max_binomial(const Matrix& X, const Matrix& Y);

struct BinomialFitSettings {
    BinomialSolverSettings solver;
    KMeansSettings kmeans;
    int max_outer = 50;
};

struct BinomialFit {
    CoefficientMatrix Theta_hat;
    ClusterPartition D_hat;
    // P after the initialization, each partition step and each accepted IRLS step.
    std::vector<double> nll_trace;
    int outer_iters = 0;
    bool converged = false;
    bool solver_converged = true;
    bool cycle_detected = false;
    bool degenerate_clusters = false;
    bool known_partition = false;
    Matrix Pi;  // fitted probabilities on the training rows
    Standardizer standardizer;
    TuningTriple triple;
    std::uint64_t seed = 0;
};

BinomialFit fit_binomial_standardized(const StandardizedData& data, const TuningTriple& triple,
                                      const BinomialFitSettings& settings = {});

BinomialFit fit_binomial(const Matrix& X_raw, const Matrix& Y, const TuningTriple& triple,
                         const BinomialFitSettings& settings = {});

BinomialFit fit_binomial_known_partition(const Matrix& X_raw, const Matrix& Y,
                                         const ClusterPartition& D, double gamma, double delta,
                                         const BinomialFitSettings& settings = {});

/// Path over a strictly descending delta grid with warm-started initial fits.
/// With `error` set, a solver failure at some delta ends the path early: the
/// fits before it are returned and the message is stored.
std::vector<BinomialFit> fit_binomial_path_standardized(
    const StandardizedData& data, int Q, double gamma, const std::vector<double>& delta_grid,
    const BinomialFitSettings& settings,
    const std::optional<ClusterPartition>& known = std::nullopt, std::string* error = nullptr);

/// Clamped probabilities for new raw covariates.
Matrix predict_proba(const BinomialFit& fit, const Matrix& X_new);

/// Slopes mapped to raw covariate units; row 0 holds the matching intercepts.
Matrix original_scale_coefficients(const BinomialFit& fit);

}  // namespace mcen
