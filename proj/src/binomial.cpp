#include "mcen/binomial.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include <omp.h>

#include "mcen/gaussian_cd.hpp"
#include "mcen/parallel.hpp"

namespace mcen {

double logistic(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

double clamp_probability(double pi) {
    return std::clamp(pi, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

WorkingValue working_quantities(double y, double pi) {
    const double w = std::max(pi * (1.0 - pi), kWeightFloor);
    return {std::log(pi / (1.0 - pi)) + (y - pi) / w, w};
}

WorkingSet WorkingSet::compute(const Matrix& U, const Matrix& Y, const Matrix& Theta) {
    const Matrix eta = U * Theta;
    WorkingSet ws{Matrix(eta.rows(), eta.cols()), Matrix(eta.rows(), eta.cols()),
                  Matrix(eta.rows(), eta.cols())};
    for (Index k = 0; k < eta.cols(); ++k)
        for (Index i = 0; i < eta.rows(); ++i) {
            const double e = std::clamp(eta(i, k), -kLinearPredictorClamp, kLinearPredictorClamp);
            const double pi = clamp_probability(logistic(e));
            const WorkingValue v = working_quantities(Y(i, k), pi);
            ws.Pi(i, k) = pi;
            ws.Z(i, k) = v.z;
            ws.W(i, k) = v.w;
        }
    return ws;
}

Matrix design_with_intercept(const Matrix& X) {
    Matrix U(X.rows(), X.cols() + 1);
    U.col(0).setOnes();
    U.rightCols(X.cols()) = X;
    return U;
}

namespace {

double log1pexp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Penalty configuration for a block of responses solved jointly. Separate
// fits use a ridge term and no fusion; fixed-group fits the reverse.
struct BlockPenalty {
    double fusion_gamma = 0.0;
    double ridge = 0.0;
    double delta = 0.0;
};

double block_objective(const Matrix& U, const Matrix& Y, const std::vector<int>& members,
                       const Matrix& T, const BlockPenalty& pen) {
    const Matrix eta = U * T;
    double value = 0.0;
    for (Index c = 0; c < T.cols(); ++c) {
        const Index k = members[static_cast<std::size_t>(c)];
        for (Index i = 0; i < eta.rows(); ++i) value += log1pexp(eta(i, c)) - Y(i, k) * eta(i, c);
    }
    const auto slopes = T.bottomRows(T.rows() - 1);
    value += 0.5 * pen.delta * slopes.cwiseAbs().sum();
    if (pen.ridge != 0.0) value += 0.5 * pen.ridge * slopes.squaredNorm();
    if (pen.fusion_gamma != 0.0 && T.cols() > 1) {
        const Vector mean_eta = eta.rowwise().mean();
        double spread = 0.0;
        for (Index c = 0; c < T.cols(); ++c) spread += (eta.col(c) - mean_eta).squaredNorm();
        value += pen.fusion_gamma / (2.0 * static_cast<double>(U.rows())) * spread;
    }
    return value;
}

// Proximal coordinate descent on the IRLS surrogate for one block.
class InnerSolver {
public:
    InnerSolver(const Matrix& U, const Matrix& Rt, Matrix W, const Matrix& Z, Matrix T,
                const BlockPenalty& pen)
        : U_(U), Rt_(Rt), W_(std::move(W)), T_(std::move(T)), pen_(pen) {
        const double n = static_cast<double>(U.rows());
        const double m = static_cast<double>(T_.cols());
        own_ = pen.fusion_gamma * (m - 1.0) / (n * m);
        cross_ = pen.fusion_gamma / (n * m);
        res_ = W_.cwiseProduct(Z - U_ * T_);
        G_ = Rt_ * T_;
        H_ = U_.cwiseAbs2().transpose() * W_;
    }

    double update(Index j, Index c) {
        const double old = T_(j, c);
        const double h = H_(j, c);
        const double fusion = own_ * (G_(j, c) - Rt_(j, j) * old) - cross_ * (G_.row(j).sum() - G_(j, c));
        const double num = U_.col(j).dot(res_.col(c)) + h * old - fusion;
        const bool penalized = j != 0;
        const double den = Rt_(j, j) * own_ + h + (penalized ? pen_.ridge : 0.0);
        const double next = soft_threshold(num, penalized ? pen_.delta / 2.0 : 0.0) / den;
        const double change = next - old;
        if (change != 0.0) {
            T_(j, c) = next;
            res_.col(c).noalias() -= change * W_.col(c).cwiseProduct(U_.col(j));
            G_.col(c).noalias() += Rt_.col(j) * change;
        }
        return std::abs(change);
    }

    double sweep() {
        double max_change = 0.0;
        for (Index j = 0; j < T_.rows(); ++j)
            for (Index c = 0; c < T_.cols(); ++c) max_change = std::max(max_change, update(j, c));
        return max_change;
    }

    double surrogate() const {
        double value = 0.0;
        for (Index c = 0; c < T_.cols(); ++c)
            value += 0.5 * (res_.col(c).cwiseAbs2().cwiseQuotient(W_.col(c))).sum();
        const auto slopes = T_.bottomRows(T_.rows() - 1);
        value += 0.5 * pen_.delta * slopes.cwiseAbs().sum();
        if (pen_.ridge != 0.0) value += 0.5 * pen_.ridge * slopes.squaredNorm();
        if (pen_.fusion_gamma != 0.0 && T_.cols() > 1) {
            const Vector mean_t = T_.rowwise().mean();
            const Vector mean_g = G_.rowwise().mean();
            double spread = 0.0;
            for (Index c = 0; c < T_.cols(); ++c) spread += (T_.col(c) - mean_t).dot(G_.col(c) - mean_g);
            value += pen_.fusion_gamma / (2.0 * static_cast<double>(U_.rows())) * spread;
        }
        return value;
    }

    const Matrix& coefficients() const { return T_; }

private:
    const Matrix& U_;
    const Matrix& Rt_;
    Matrix W_;
    Matrix T_;
    BlockPenalty pen_;
    double own_ = 0.0;
    double cross_ = 0.0;
    Matrix res_;
    Matrix G_;
    Matrix H_;
};

struct BlockOutcome {
    Matrix T;
    bool converged = false;
    int irls_iters = 0;
    std::vector<double> trace;
    std::vector<std::vector<double>> inner_traces;
};

BlockOutcome solve_block(const Matrix& U, const Matrix& Rt, const Matrix& Y,
                         const std::vector<int>& members, Matrix T, const BlockPenalty& pen,
                         const BinomialSolverSettings& settings) {
    BlockOutcome out;
    Matrix Yb(Y.rows(), static_cast<Index>(members.size()));
    for (std::size_t c = 0; c < members.size(); ++c) Yb.col(static_cast<Index>(c)) = Y.col(members[c]);

    double current = block_objective(U, Y, members, T, pen);
    out.trace.push_back(current);
    int beyond_clamp = 0;

    for (int it = 0; it < settings.max_irls; ++it) {
        const WorkingSet ws = WorkingSet::compute(U, Yb, T);
        InnerSolver inner(U, Rt, ws.W, ws.Z, T, pen);
        std::vector<double> inner_trace;
        if (settings.record_inner_objective) inner_trace.push_back(inner.surrogate());
        for (int s = 0; s < settings.max_sweeps; ++s) {
            const double change = inner.sweep();
            if (settings.record_inner_objective) inner_trace.push_back(inner.surrogate());
            if (change < settings.tol) break;
        }
        if (settings.record_inner_objective) out.inner_traces.push_back(std::move(inner_trace));

        const Matrix step = inner.coefficients() - T;
        const double step_size = step.cwiseAbs().maxCoeff();
        double t = 1.0;
        Matrix candidate = T + step;
        double value = block_objective(U, Y, members, candidate, pen);
        for (int h = 0; h < settings.max_halvings && !(value <= current); ++h) {
            t *= 0.5;
            candidate = T + t * step;
            value = block_objective(U, Y, members, candidate, pen);
        }
        ++out.irls_iters;
        if (!(value <= current)) {
            // No decrease along the step: stationary up to round-off, or stuck.
            out.converged = step_size < settings.irls_tol;
            out.T = std::move(T);
            return out;
        }
        const double decrease = current - value;
        T = std::move(candidate);
        current = value;
        out.trace.push_back(current);

        if ((U * T).cwiseAbs().maxCoeff() > kLinearPredictorClamp) {
            if (++beyond_clamp >= 3)
                throw Error(ErrorKind::SeparationDetected,
                            "linear predictor exceeds +/-" + std::to_string(kLinearPredictorClamp) +
                                " on consecutive IRLS steps");
        } else {
            beyond_clamp = 0;
        }
        if (t * step_size < settings.irls_tol || decrease <= 1e-13 * (1.0 + std::abs(current))) {
            out.converged = true;
            break;
        }
    }
    out.T = std::move(T);
    return out;
}

void check_binomial_shapes(const Matrix& U, const Matrix& Y, const Matrix& init) {
    if (U.rows() != Y.rows()) throw Error(ErrorKind::DimensionMismatch, "U and Y row counts differ");
    if (init.rows() != U.cols() || init.cols() != Y.cols())
        throw Error(ErrorKind::DimensionMismatch, "initial coefficients have the wrong shape");
}

// Runs independent blocks concurrently and merges their traces into one
// trace of the summed criterion.
BinomialSolveResult solve_blocks(const Matrix& U, const Matrix& Y,
                                 const std::vector<std::vector<int>>& blocks, const Matrix& init,
                                 const BlockPenalty& pen, const BinomialSolverSettings& settings,
                                 const std::vector<bool>& skip = {}) {
    const Matrix Rt = U.transpose() * U;
    const int count = static_cast<int>(blocks.size());
    std::vector<BlockOutcome> outcomes(static_cast<std::size_t>(count));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));

#pragma omp parallel for schedule(dynamic) num_threads(thread_budget()) if (count > 1)
    for (int b = 0; b < count; ++b) {
        const auto& members = blocks[static_cast<std::size_t>(b)];
        Matrix T(init.rows(), static_cast<Index>(members.size()));
        for (std::size_t c = 0; c < members.size(); ++c) T.col(static_cast<Index>(c)) = init.col(members[c]);
        if (!skip.empty() && skip[static_cast<std::size_t>(b)]) {
            BlockOutcome fixed;
            fixed.converged = true;
            fixed.trace.push_back(block_objective(U, Y, members, T, pen));
            fixed.T = std::move(T);
            outcomes[static_cast<std::size_t>(b)] = std::move(fixed);
            continue;
        }
        try {
            outcomes[static_cast<std::size_t>(b)] = solve_block(U, Rt, Y, members, std::move(T), pen, settings);
        } catch (...) {
            errors[static_cast<std::size_t>(b)] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    BinomialSolveResult result;
    result.Theta = init;
    std::size_t longest = 0;
    for (int b = 0; b < count; ++b) {
        const auto& o = outcomes[static_cast<std::size_t>(b)];
        const auto& members = blocks[static_cast<std::size_t>(b)];
        for (std::size_t c = 0; c < members.size(); ++c) result.Theta.col(members[c]) = o.T.col(static_cast<Index>(c));
        result.converged = result.converged && o.converged;
        result.irls_iters = std::max(result.irls_iters, o.irls_iters);
        longest = std::max(longest, o.trace.size());
        for (const auto& t : o.inner_traces) result.inner_traces.push_back(t);
    }
    result.nll_trace.assign(longest, 0.0);
    for (const auto& o : outcomes)
        for (std::size_t t = 0; t < longest; ++t) result.nll_trace[t] += o.trace[std::min(t, o.trace.size() - 1)];
    return result;
}

}  // namespace

double proximal_cd_update(Index j, Index k, const Matrix& Theta, const ClusterPartition& D,
                          const Matrix& U, const Matrix& W, const Matrix& Z, double gamma,
                          double delta) {
    const std::vector<int> members = D.members(D.cluster_of(static_cast<int>(k)));
    const double n = static_cast<double>(U.rows());
    const double m = static_cast<double>(members.size());
    const Vector wU = W.col(k).cwiseProduct(U.col(j));
    double M = 0.0;
    for (Index c = 0; c < U.cols(); ++c)
        if (c != j) M += wU.dot(U.col(c)) * Theta(c, k);
    const Matrix Rt = U.transpose() * U;
    M += gamma * (m - 1.0) / (n * m) * (Rt.row(j).dot(Theta.col(k)) - Rt(j, j) * Theta(j, k));
    for (int s : members)
        if (s != k) M -= gamma / (n * m) * Rt.row(j).dot(Theta.col(s));
    const double num = wU.dot(Z.col(k)) - M;
    const double den = Rt(j, j) * gamma * (m - 1.0) / (n * m) + wU.dot(U.col(j));
    return soft_threshold(num, j != 0 ? delta / 2.0 : 0.0) / den;
}

double penalized_nll(const Matrix& Theta, const Matrix& U, const Matrix& Y,
                     const ClusterPartition& D, double gamma, double delta) {
    double value = 0.0;
    for (const auto& members : D.all_members()) {
        Matrix T(Theta.rows(), static_cast<Index>(members.size()));
        for (std::size_t c = 0; c < members.size(); ++c) T.col(static_cast<Index>(c)) = Theta.col(members[c]);
        value += block_objective(U, Y, members, T, BlockPenalty{gamma, 0.0, delta});
    }
    return value;
}

double surrogate_objective(const Matrix& Theta, const Matrix& U, const WorkingSet& ws,
                           const ClusterPartition& D, double gamma, double delta) {
    const double n = static_cast<double>(U.rows());
    const Matrix eta = U * Theta;
    double value = 0.5 * (ws.W.cwiseProduct((ws.Z - eta).cwiseAbs2())).sum();
    value += 0.5 * delta * Theta.bottomRows(Theta.rows() - 1).cwiseAbs().sum();
    if (gamma != 0.0) {
        for (const auto& members : D.all_members()) {
            double pairs = 0.0;
            for (int l : members)
                for (int m : members) pairs += (eta.col(l) - eta.col(m)).squaredNorm();
            value += gamma / (4.0 * n) * pairs / static_cast<double>(members.size());
        }
    }
    return value;
}

BinomialSolveResult solve_fixed_groups_binomial(const Matrix& U, const Matrix& Y,
                                                const ClusterPartition& D, double gamma,
                                                double delta, const Matrix& init,
                                                const BinomialSolverSettings& settings) {
    check_binomial_shapes(U, Y, init);
    if (D.r() != Y.cols()) throw Error(ErrorKind::DimensionMismatch, "partition size mismatch");
    return solve_blocks(U, Y, D.all_members(), init, BlockPenalty{gamma, 0.0, delta}, settings);
}

BinomialSolveResult sen_glm_init(const Matrix& U, const Matrix& Y, double gamma, double delta,
                                 const BinomialSolverSettings& settings, const Matrix* warm_start) {
    const Index r = Y.cols();
    Matrix init = Matrix::Zero(U.cols(), r);
    std::vector<bool> constant(static_cast<std::size_t>(r), false);
    for (Index k = 0; k < r; ++k) {
        const double mean = Y.col(k).mean();
        const double pi = clamp_probability(mean);
        init(0, k) = std::log(pi / (1.0 - pi));
        constant[static_cast<std::size_t>(k)] = mean == 0.0 || mean == 1.0;
        if (warm_start && !constant[static_cast<std::size_t>(k)]) init.col(k) = warm_start->col(k);
    }
    check_binomial_shapes(U, Y, init);
    std::vector<std::vector<int>> blocks(static_cast<std::size_t>(r));
    for (Index k = 0; k < r; ++k) blocks[static_cast<std::size_t>(k)] = {static_cast<int>(k)};
    return solve_blocks(U, Y, blocks, init, BlockPenalty{0.0, gamma, delta}, settings, constant);
}

double delta_max_binomial(const Matrix& X, const Matrix& Y) {
    if (X.rows() != Y.rows()) throw Error(ErrorKind::DimensionMismatch, "X and Y row counts differ");
    const Matrix centered = Y.rowwise() - Y.colwise().mean();
    return 2.0 * (X.transpose() * centered).cwiseAbs().maxCoeff();
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t step) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (step + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void append_tail(std::vector<double>& trace, const std::vector<double>& more) {
    // The first entry of a solve trace repeats the value already recorded.
    trace.insert(trace.end(), more.begin() + (more.empty() ? 0 : 1), more.end());
}

BinomialFit two_step_binomial(const Matrix& U, const Matrix& Y, Matrix Theta,
                              const TuningTriple& triple, const BinomialFitSettings& settings,
                              const std::optional<ClusterPartition>& known) {
    BinomialFit fit;
    fit.triple = triple;
    fit.seed = settings.kmeans.seed;
    fit.known_partition = known.has_value();
    fit.Theta_hat.has_intercept_row = true;

    if (known) {
        fit.nll_trace.push_back(penalized_nll(Theta, U, Y, *known, triple.gamma, triple.delta));
        BinomialSolveResult res = solve_fixed_groups_binomial(U, Y, *known, triple.gamma,
                                                              triple.delta, Theta, settings.solver);
        append_tail(fit.nll_trace, res.nll_trace);
        fit.Theta_hat.values = std::move(res.Theta);
        fit.D_hat = *known;
        fit.solver_converged = res.converged;
        fit.converged = true;
        fit.outer_iters = 1;
        return fit;
    }

    std::optional<ClusterPartition> previous;
    std::vector<ClusterPartition> seen;
    double best_value = std::numeric_limits<double>::infinity();
    Matrix best_T;
    ClusterPartition best_D;

    for (int w = 1; w <= settings.max_outer; ++w) {
        KMeansSettings ks = settings.kmeans;
        ks.seed = mix_seed(settings.kmeans.seed, static_cast<std::uint64_t>(w));
        KMeansResult km = kmeans(U * Theta, triple.Q, ks, previous);
        fit.degenerate_clusters = fit.degenerate_clusters || km.degenerate;
        ClusterPartition D = km.partition.canonical();
        fit.nll_trace.push_back(penalized_nll(Theta, U, Y, D, triple.gamma, triple.delta));

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

        BinomialSolveResult res =
            solve_fixed_groups_binomial(U, Y, D, triple.gamma, triple.delta, Theta, settings.solver);
        fit.solver_converged = fit.solver_converged && res.converged;
        append_tail(fit.nll_trace, res.nll_trace);
        Theta = std::move(res.Theta);
        previous = D;
        fit.outer_iters = w;
        const double value = fit.nll_trace.back();
        if (value < best_value) {
            best_value = value;
            best_T = Theta;
            best_D = D;
        }
    }

    if (fit.cycle_detected) {
        fit.Theta_hat.values = std::move(best_T);
        fit.D_hat = std::move(best_D);
    } else {
        fit.Theta_hat.values = std::move(Theta);
        fit.D_hat = std::move(*previous);
    }
    return fit;
}

void finish(BinomialFit& fit, const StandardizedData& data, const Matrix& U) {
    fit.standardizer = data.standardizer;
    fit.Pi = (U * fit.Theta_hat.values).unaryExpr([](double e) { return clamp_probability(logistic(e)); });
}

}  // namespace

std::vector<BinomialFit> fit_binomial_path_standardized(
    const StandardizedData& data, int Q, double gamma, const std::vector<double>& delta_grid,
    const BinomialFitSettings& settings, const std::optional<ClusterPartition>& known,
    std::string* error) {
    if (data.Y.kind() != ResponseKind::binomial)
        throw Error(ErrorKind::InvalidArgument, "binomial fit needs 0/1 responses");
    for (std::size_t i = 1; i < delta_grid.size(); ++i)
        if (!(delta_grid[i] < delta_grid[i - 1]))
            throw Error(ErrorKind::InvalidArgument, "delta grid must be strictly descending");
    const Matrix U = design_with_intercept(data.X.values());
    const Matrix& Y = data.Y.values();
    if (known && known->r() != Y.cols())
        throw Error(ErrorKind::DimensionMismatch, "known partition does not cover the responses");

    std::vector<BinomialFit> fits;
    fits.reserve(delta_grid.size());
    Matrix sen;
    for (double delta : delta_grid) {
        const TuningTriple triple{Q, gamma, delta};
        triple.validate();
        if (Q > Y.cols()) throw Error(ErrorKind::InvalidArgument, "Q exceeds the number of responses");
        try {
            BinomialSolveResult init =
                sen_glm_init(U, Y, gamma, delta, settings.solver, fits.empty() ? nullptr : &sen);
            sen = init.Theta;
            Matrix start = sen;
            if (known && !fits.empty()) start = fits.back().Theta_hat.values;
            BinomialFit f = two_step_binomial(U, Y, std::move(start), triple, settings, known);
            f.solver_converged = f.solver_converged && init.converged;
            finish(f, data, U);
            fits.push_back(std::move(f));
        } catch (const Error& e) {
            if (!error) throw;
            *error = e.what();
            break;
        }
    }
    return fits;
}

BinomialFit fit_binomial_standardized(const StandardizedData& data, const TuningTriple& triple,
                                      const BinomialFitSettings& settings) {
    auto path = fit_binomial_path_standardized(data, triple.Q, triple.gamma, {triple.delta}, settings);
    return std::move(path.front());
}

BinomialFit fit_binomial(const Matrix& X_raw, const Matrix& Y, const TuningTriple& triple,
                         const BinomialFitSettings& settings) {
    return fit_binomial_standardized(standardize(X_raw, Y, ResponseKind::binomial), triple, settings);
}

BinomialFit fit_binomial_known_partition(const Matrix& X_raw, const Matrix& Y,
                                         const ClusterPartition& D, double gamma, double delta,
                                         const BinomialFitSettings& settings) {
    auto path = fit_binomial_path_standardized(standardize(X_raw, Y, ResponseKind::binomial), D.Q(),
                                               gamma, {delta}, settings, D);
    return std::move(path.front());
}

Matrix predict_proba(const BinomialFit& fit, const Matrix& X_new) {
    const Matrix U = design_with_intercept(fit.standardizer.transform_x(X_new));
    return (U * fit.Theta_hat.values).unaryExpr([](double e) { return clamp_probability(logistic(e)); });
}

Matrix original_scale_coefficients(const BinomialFit& fit) {
    const Standardizer& s = fit.standardizer;
    Matrix T = fit.Theta_hat.values;
    for (Index k = 0; k < T.cols(); ++k) {
        double shift = 0.0;
        for (Index j = 1; j < T.rows(); ++j) {
            T(j, k) /= s.x_scale[j - 1];
            shift += T(j, k) * s.x_center[j - 1];
        }
        T(0, k) -= shift;
    }
    return T;
}

}  // namespace mcen
