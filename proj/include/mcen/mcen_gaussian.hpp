#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcen/data_model.hpp"
#include "mcen/gaussian_cd.hpp"
#include "mcen/kmeans.hpp"

namespace mcen {

struct FitSettings {
    SolverSettings solver;
    KMeansSettings kmeans;
    int max_outer = 50;
};

/// Result of the two-step estimator on Gaussian responses. Coefficients and
/// objective values are on the standardized scale; `predict` maps back.
struct McenFit {
    CoefficientMatrix B_hat;
    ClusterPartition D_hat;
    // Objective after every half-step: (B^{w-1}, D^w) then (B^w, D^w).
    std::vector<double> objective_trace;
    int outer_iters = 0;
    bool converged = false;         // partition stabilized
    bool solver_converged = true;   // every coordinate-descent solve converged
    bool cycle_detected = false;
    bool all_zero_init = false;     // elastic-net start was fully sparse
    bool degenerate_clusters = false;  // fewer distinct fitted vectors than Q at some step
    bool known_partition = false;   // partition was supplied, not estimated
    Standardizer standardizer;
    TuningTriple triple;
    std::uint64_t seed = 0;
};

/// Separate elastic net per response:
/// 1/(2n)||y_c - X b||^2 + (delta/2)||b||_1 + gamma ||b||^2.
Matrix sen_init(const Matrix& X, const Matrix& Y, double gamma, double delta,
                const SolverSettings& settings = {}, const Matrix* warm_start = nullptr);

/// Two-step fit on already standardized data.
McenFit fit_standardized(const StandardizedData& data, const TuningTriple& triple,
                         const FitSettings& settings = {});

/// Standardizes the raw data, then runs the two-step algorithm.
McenFit fit(const Matrix& X_raw, const Matrix& Y_raw, const TuningTriple& triple,
            const FitSettings& settings = {});

/// Fit with the response partition supplied: a single fixed-group solve
/// started from the separate elastic net.
McenFit fit_known_partition(const Matrix& X_raw, const Matrix& Y_raw, const ClusterPartition& D,
                            double gamma, double delta, const FitSettings& settings = {});

/// Fits over a strictly descending delta grid on shared standardization; the
/// elastic-net start at each delta is warm-started from the previous one.
/// An empty grid means the default path from delta_max.
std::vector<McenFit> fit_path(const Matrix& X_raw, const Matrix& Y_raw, int Q, double gamma,
                              std::vector<double> delta_grid, const FitSettings& settings = {});

/// Same as fit_path on already standardized data; when `known` is given the
/// partition is fixed. With `error` set, a failure at some delta ends the path
/// early: earlier fits are returned and the message is stored.
std::vector<McenFit> fit_path_standardized(const StandardizedData& data, int Q, double gamma,
                                           const std::vector<double>& delta_grid,
                                           const FitSettings& settings,
                                           const std::optional<ClusterPartition>& known = std::nullopt,
                                           std::string* error = nullptr);

/// `count` geometric values from delta_max down to ratio * delta_max with
/// ratio 0.001 (0.05 when p > n).
std::vector<double> default_delta_path(double dmax, Index n, Index p, int count = 100);

/// Predictions on the original response scale.
Matrix predict(const McenFit& fit, const Matrix& X_new);

/// Coefficients mapped to raw covariate and response units.
Matrix original_scale_coefficients(const McenFit& fit);

}  // namespace mcen
