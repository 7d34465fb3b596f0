#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcen/binomial.hpp"
#include "mcen/mcen_gaussian.hpp"

namespace mcen {

enum class CriterionKind { squared_error_min, loglik_max };

const char* to_string(CriterionKind kind);

struct CvGrid {
    std::vector<int> Q_values{1, 2, 3, 4};
    std::vector<double> gamma_values{0.0, 0.25, 0.5, 1.0, 2.0};
    // Empty means a geometric path of `delta_count` values from delta_max of
    // the full (standardized) data; the path is shared by all folds.
    std::vector<double> delta_values;
    int delta_count = 100;
    int K = 10;
    std::uint64_t seed = 0;
};

struct CvSettings {
    FitSettings gaussian;
    BinomialFitSettings binomial;
    // Fixes the partition (true-cluster fits); Q_values is then ignored.
    std::optional<ClusterPartition> known;
};

/// One (triple, fold) evaluation.
struct CvRecord {
    TuningTriple triple;
    int fold = 0;
    double criterion = 0.0;
    bool valid = true;
    std::string error;
};

/// A grid cell with its criterion summed over folds. A cell is invalid when
/// any fold failed.
struct CvCell {
    TuningTriple triple;
    double criterion = 0.0;
    bool valid = true;
};

struct CvResult {
    std::vector<CvRecord> records;
    std::vector<CvCell> table;
    TuningTriple best;
    double best_criterion = 0.0;
    CriterionKind criterion_kind = CriterionKind::squared_error_min;
    std::vector<double> delta_values;
    std::vector<std::vector<Index>> folds;
};

/// Shuffles 0..n-1 with the seed and deals the indices round-robin into K
/// folds; each fold is returned sorted. Throws InvalidK unless 2 <= K <= n.
std::vector<std::vector<Index>> kfold_split(Index n, int K, std::uint64_t seed);

/// Squared prediction error on the original response scale, summed over
/// held-out rows and folds. Best = smallest.
CvResult cv_gaussian(const Matrix& X_raw, const Matrix& Y_raw, const CvGrid& grid,
                     const CvSettings& settings = {});

/// Held-out Bernoulli log-likelihood with clamped probabilities, summed over
/// folds. Best = largest.
CvResult cv_binomial(const Matrix& X_raw, const Matrix& Y, const CvGrid& grid,
                     const CvSettings& settings = {});

/// Default gamma grid: {0, 0.25, 0.5, 1, 2} for Gaussian responses and
/// n * {0, 0.05, 0.25, 1} for binomial responses.
std::vector<double> auto_gamma_grid(ResponseKind kind, Index n);

/// Picks the best valid cell. Ties (relative 1e-12) go to the smallest Q, then
/// the largest delta, then the smallest gamma. Throws DegenerateInput when no
/// cell is valid.
CvCell select_best(const std::vector<CvCell>& table, CriterionKind kind);

/// Held-out Bernoulli log-likelihood of probabilities against 0/1 outcomes.
double bernoulli_loglik(const Matrix& Pi, const Matrix& Y);

/// Separate elastic net with its own (gamma_c, delta_c) per response.
struct SenSelection {
    std::vector<double> gamma;
    std::vector<double> delta;
    Matrix criterion;  // responses x cells, fold-summed; NaN for failed cells
    std::vector<std::pair<double, double>> cells;  // (gamma, delta) per criterion column
};

SenSelection cv_sen_gaussian(const Matrix& X_raw, const Matrix& Y_raw, const CvGrid& grid,
                             const SolverSettings& settings = {});
SenSelection cv_sen_binomial(const Matrix& X_raw, const Matrix& Y, const CvGrid& grid,
                             const BinomialSolverSettings& settings = {});

/// Per-response elastic-net fit on the standardized scale of `data`.
Matrix sen_fit_gaussian(const StandardizedData& data, const std::vector<double>& gamma,
                        const std::vector<double>& delta, const SolverSettings& settings = {});
/// Per-response logistic elastic net; row 0 holds intercepts.
Matrix sen_fit_binomial(const StandardizedData& data, const std::vector<double>& gamma,
                        const std::vector<double>& delta,
                        const BinomialSolverSettings& settings = {});

}  // namespace mcen
