#include "mcen/mcen_gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <omp.h>

#include "mcen/parallel.hpp"

namespace mcen {

namespace {

// Elastic-net coordinate descent for one response, driven by the Gram cache.
Vector elastic_net_column(const GramCache& gram, Index k, double gamma, double delta,
                          const SolverSettings& settings, Vector b) {
    const Index p = gram.p();
    const double thr = delta / 2.0;
    Vector Rb = gram.R * b;
    auto update = [&](Index j) {
        const double rjj = gram.R(j, j);
        const double old = b[j];
        const double rho = gram.XtY(j, k) - (Rb[j] - rjj * old);
        const double next = soft_threshold(rho, thr) / (rjj + 2.0 * gamma);
        const double change = next - old;
        if (change != 0.0) {
            b[j] = next;
            Rb.noalias() += gram.R.col(j) * change;
        }
        return std::abs(change);
    };
    int sweeps = 0;
    while (sweeps < settings.max_sweeps) {
        Rb = gram.R * b;
        double full = 0.0;
        for (Index j = 0; j < p; ++j) full = std::max(full, update(j));
        ++sweeps;
        if (full < settings.tol) break;
        if (!settings.active_set) continue;
        while (sweeps < settings.max_sweeps) {
            double change = 0.0;
            for (Index j = 0; j < p; ++j)
                if (b[j] != 0.0) change = std::max(change, update(j));
            ++sweeps;
            if (change < settings.tol) break;
        }
    }
    return b;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t step) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (step + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

McenFit two_step(const Matrix& X, const Matrix& Y, const GramCache& gram, Matrix B,
                 const TuningTriple& triple, const FitSettings& settings,
                 const std::optional<ClusterPartition>& known) {
    const int r = static_cast<int>(Y.cols());
    McenFit fit;
    fit.triple = triple;
    fit.seed = settings.kmeans.seed;
    fit.known_partition = known.has_value();

    if (B.isZero(0.0)) {
        fit.all_zero_init = true;
        fit.converged = true;
        fit.outer_iters = 1;
        fit.D_hat = known ? *known : ClusterPartition::single_cluster(r);
        fit.B_hat.values = Matrix::Zero(B.rows(), B.cols());
        fit.objective_trace.push_back(
            objective(fit.B_hat.values, X, Y, fit.D_hat, triple.gamma, triple.delta));
        return fit;
    }

    if (known) {
        fit.objective_trace.push_back(objective(B, X, Y, *known, triple.gamma, triple.delta));
        FixedGroupResult res =
            solve_fixed_groups(gram, *known, triple.gamma, triple.delta, B, settings.solver);
        fit.B_hat.values = std::move(res.B);
        fit.D_hat = *known;
        fit.solver_converged = res.converged;
        fit.converged = true;
        fit.outer_iters = 1;
        fit.objective_trace.push_back(
            objective(fit.B_hat.values, X, Y, fit.D_hat, triple.gamma, triple.delta));
        return fit;
    }

    std::optional<ClusterPartition> previous;
    std::vector<ClusterPartition> seen;
    double best_value = std::numeric_limits<double>::infinity();
    Matrix best_B;
    ClusterPartition best_D;

    for (int w = 1; w <= settings.max_outer; ++w) {
        KMeansSettings ks = settings.kmeans;
        ks.seed = mix_seed(settings.kmeans.seed, static_cast<std::uint64_t>(w));
        KMeansResult km = cluster_fitted(X, B, triple.Q, ks, previous);
        fit.degenerate_clusters = fit.degenerate_clusters || km.degenerate;
        ClusterPartition D = km.partition.canonical();
        fit.objective_trace.push_back(objective(B, X, Y, D, triple.gamma, triple.delta));

        if (previous && D.same_partition(*previous)) {
            fit.converged = true;
            break;
        }
        if (std::any_of(seen.begin(), seen.end(),
                        [&](const ClusterPartition& s) { return s.same_partition(D); })) {
            fit.cycle_detected = true;
            break;
        }
        seen.push_back(D);

        FixedGroupResult res = solve_fixed_groups(gram, D, triple.gamma, triple.delta, B, settings.solver);
        fit.solver_converged = fit.solver_converged && res.converged;
        B = std::move(res.B);
        previous = D;
        fit.outer_iters = w;
        const double value = objective(B, X, Y, D, triple.gamma, triple.delta);
        fit.objective_trace.push_back(value);
        if (value < best_value) {
            best_value = value;
            best_B = B;
            best_D = D;
        }
    }

    if (fit.cycle_detected) {
        fit.B_hat.values = std::move(best_B);
        fit.D_hat = std::move(best_D);
    } else {
        fit.B_hat.values = std::move(B);
        fit.D_hat = std::move(*previous);
    }
    return fit;
}

void check_Q(const TuningTriple& triple, Index r) {
    triple.validate();
    if (triple.Q > r)
        throw Error(ErrorKind::InvalidArgument,
                    "Q=" + std::to_string(triple.Q) + " exceeds the number of responses " +
                        std::to_string(r));
}

}  // namespace

Matrix sen_init(const Matrix& X, const Matrix& Y, double gamma, double delta,
                const SolverSettings& settings, const Matrix* warm_start) {
    const GramCache gram = GramCache::build(X, Y);
    const Index p = gram.p();
    const Index r = gram.r();
    Matrix B = warm_start ? *warm_start : Matrix::Zero(p, r);
    if (B.rows() != p || B.cols() != r)
        throw Error(ErrorKind::DimensionMismatch, "warm start has the wrong shape");
#pragma omp parallel for schedule(dynamic) num_threads(thread_budget()) if (r > 1)
    for (Index k = 0; k < r; ++k)
        B.col(k) = elastic_net_column(gram, k, gamma, delta, settings, B.col(k));
    return B;
}

McenFit fit_standardized(const StandardizedData& data, const TuningTriple& triple,
                         const FitSettings& settings) {
    const Matrix& X = data.X.values();
    const Matrix& Y = data.Y.values();
    check_Q(triple, Y.cols());
    const GramCache gram = GramCache::build(X, Y);
    Matrix B = sen_init(X, Y, triple.gamma, triple.delta, settings.solver);
    McenFit fit = two_step(X, Y, gram, std::move(B), triple, settings, std::nullopt);
    fit.standardizer = data.standardizer;
    return fit;
}

McenFit fit(const Matrix& X_raw, const Matrix& Y_raw, const TuningTriple& triple,
            const FitSettings& settings) {
    return fit_standardized(standardize(X_raw, Y_raw, ResponseKind::gaussian), triple, settings);
}

McenFit fit_known_partition(const Matrix& X_raw, const Matrix& Y_raw, const ClusterPartition& D,
                            double gamma, double delta, const FitSettings& settings) {
    auto path = fit_path_standardized(standardize(X_raw, Y_raw, ResponseKind::gaussian), D.Q(),
                                      gamma, {delta}, settings, D);
    return std::move(path.front());
}

std::vector<double> default_delta_path(double dmax, Index n, Index p, int count) {
    if (!(dmax > 0.0) || count <= 1) return {std::max(dmax, 0.0)};
    const double ratio = p > n ? 0.05 : 0.001;
    std::vector<double> path(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        path[static_cast<std::size_t>(i)] =
            dmax * std::pow(ratio, static_cast<double>(i) / static_cast<double>(count - 1));
    return path;
}

std::vector<McenFit> fit_path_standardized(const StandardizedData& data, int Q, double gamma,
                                           const std::vector<double>& delta_grid,
                                           const FitSettings& settings,
                                           const std::optional<ClusterPartition>& known,
                                           std::string* error) {
    const Matrix& X = data.X.values();
    const Matrix& Y = data.Y.values();
    for (std::size_t i = 1; i < delta_grid.size(); ++i)
        if (!(delta_grid[i] < delta_grid[i - 1]))
            throw Error(ErrorKind::InvalidArgument, "delta grid must be strictly descending");
    if (known && known->r() != Y.cols())
        throw Error(ErrorKind::DimensionMismatch, "known partition does not cover the responses");

    const GramCache gram = GramCache::build(X, Y);
    std::vector<McenFit> fits;
    fits.reserve(delta_grid.size());
    Matrix sen = Matrix::Zero(X.cols(), Y.cols());
    for (double delta : delta_grid) {
        const TuningTriple triple{Q, gamma, delta};
        check_Q(triple, Y.cols());
        try {
            sen = sen_init(X, Y, gamma, delta, settings.solver, &sen);
            Matrix start = sen;
            if (known && !fits.empty() && !sen.isZero(0.0)) start = fits.back().B_hat.values;
            McenFit f = two_step(X, Y, gram, std::move(start), triple, settings, known);
            f.standardizer = data.standardizer;
            fits.push_back(std::move(f));
        } catch (const Error& e) {
            if (!error) throw;
            *error = e.what();
            break;
        }
    }
    return fits;
}

std::vector<McenFit> fit_path(const Matrix& X_raw, const Matrix& Y_raw, int Q, double gamma,
                              std::vector<double> delta_grid, const FitSettings& settings) {
    const StandardizedData data = standardize(X_raw, Y_raw, ResponseKind::gaussian);
    if (delta_grid.empty())
        delta_grid = default_delta_path(delta_max(data.X.values(), data.Y.values()), data.X.n(),
                                        data.X.p());
    return fit_path_standardized(data, Q, gamma, delta_grid, settings);
}

Matrix predict(const McenFit& fit, const Matrix& X_new) {
    const Matrix X = fit.standardizer.transform_x(X_new);
    return fit.standardizer.inverse_y(X * fit.B_hat.values);
}

Matrix original_scale_coefficients(const McenFit& fit) {
    const Standardizer& s = fit.standardizer;
    Matrix B = fit.B_hat.values;
    for (Index k = 0; k < B.cols(); ++k)
        for (Index j = 0; j < B.rows(); ++j) B(j, k) *= s.y_scale[k] / s.x_scale[j];
    return B;
}

}  // namespace mcen
