#include "mcen/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mcen/parallel.hpp"

namespace mcen {

namespace {

Matrix take_rows(const Matrix& M, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), M.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = M.row(rows[i]);
    return out;
}

std::vector<Index> complement(Index n, const std::vector<Index>& fold) {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(n) - fold.size());
    std::size_t f = 0;
    for (Index i = 0; i < n; ++i) {
        if (f < fold.size() && fold[f] == i) {
            ++f;
            continue;
        }
        out.push_back(i);
    }
    return out;
}

// Distinct grid values, strictly descending, plus where each requested entry landed.
struct DeltaPath {
    std::vector<double> values;
    std::vector<std::size_t> slot;
};

DeltaPath resolve_deltas(const std::vector<double>& requested) {
    DeltaPath path;
    path.values = requested;
    std::sort(path.values.begin(), path.values.end(), std::greater<>());
    path.values.erase(std::unique(path.values.begin(), path.values.end()), path.values.end());
    for (double d : requested)
        path.slot.push_back(static_cast<std::size_t>(
            std::find(path.values.begin(), path.values.end(), d) - path.values.begin()));
    return path;
}

void check_grid(const CvGrid& grid, const CvSettings& settings, Index n) {
    if (grid.K < 2 || grid.K > n)
        throw Error(ErrorKind::InvalidK, "K=" + std::to_string(grid.K) + " with n=" + std::to_string(n));
    if (!settings.known && grid.Q_values.empty())
        throw Error(ErrorKind::InvalidArgument, "empty Q grid");
    if (grid.gamma_values.empty()) throw Error(ErrorKind::InvalidArgument, "empty gamma grid");
    for (double g : grid.gamma_values)
        if (!(g >= 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma values must be nonnegative");
    for (double d : grid.delta_values)
        if (!(d >= 0.0)) throw Error(ErrorKind::InvalidArgument, "delta values must be nonnegative");
    if (grid.delta_values.empty() && grid.delta_count < 1)
        throw Error(ErrorKind::InvalidArgument, "delta_count must be positive");
}

std::vector<double> auto_deltas(double dmax, Index n, Index p, int count) {
    return default_delta_path(dmax, n, p, count);
}

bool better(double candidate, double incumbent, CriterionKind kind) {
    const double slack = 1e-12 * std::max(std::abs(candidate), std::abs(incumbent));
    return kind == CriterionKind::squared_error_min ? candidate < incumbent - slack
                                                    : candidate > incumbent + slack;
}

// Fold evaluation: given training/test rows and a Q, gamma, returns the
// criterion for each distinct delta (NaN after a failure) and the failure text.
struct PathScore {
    std::vector<double> criterion;
    std::string error;
};

template <class Evaluate>
CvResult run_cv(const Matrix& X_raw, const Matrix& Y_raw, const CvGrid& grid,
                const CvSettings& settings, CriterionKind kind, std::vector<double> deltas,
                Evaluate evaluate) {
    const Index n = X_raw.rows();
    CvResult result;
    result.criterion_kind = kind;
    result.folds = kfold_split(n, grid.K, grid.seed);
    const DeltaPath path = resolve_deltas(deltas);
    result.delta_values = deltas;

    const std::vector<int> Qs = settings.known ? std::vector<int>{settings.known->Q()} : grid.Q_values;
    const std::size_t nQ = Qs.size(), nG = grid.gamma_values.size(),
                      nF = static_cast<std::size_t>(grid.K);
    const std::size_t tasks = nQ * nG * nF;
    std::vector<PathScore> scores(tasks);

#pragma omp parallel for schedule(dynamic) num_threads(thread_budget())
    for (std::size_t t = 0; t < tasks; ++t) {
        const std::size_t f = t % nF, g = (t / nF) % nG, q = t / (nF * nG);
        PathScore& s = scores[t];
        s.criterion.assign(path.values.size(), std::numeric_limits<double>::quiet_NaN());
        try {
            const std::vector<Index>& test = result.folds[f];
            const std::vector<Index> train = complement(n, test);
            evaluate(Qs[q], grid.gamma_values[g], path.values, take_rows(X_raw, train),
                     take_rows(Y_raw, train), take_rows(X_raw, test), take_rows(Y_raw, test), s);
        } catch (const std::exception& e) {
            s.error = e.what();
        }
    }

    for (std::size_t q = 0; q < nQ; ++q)
        for (std::size_t g = 0; g < nG; ++g)
            for (std::size_t d = 0; d < deltas.size(); ++d) {
                CvCell cell{TuningTriple{Qs[q], grid.gamma_values[g], deltas[d]}, 0.0, true};
                for (std::size_t f = 0; f < nF; ++f) {
                    const PathScore& s = scores[(q * nG + g) * nF + f];
                    CvRecord rec{cell.triple, static_cast<int>(f), s.criterion[path.slot[d]], true, {}};
                    if (!std::isfinite(rec.criterion)) {
                        rec.valid = false;
                        rec.error = s.error.empty() ? "non-finite criterion" : s.error;
                        cell.valid = false;
                    } else {
                        cell.criterion += rec.criterion;
                    }
                    result.records.push_back(std::move(rec));
                }
                if (!cell.valid) cell.criterion = std::numeric_limits<double>::quiet_NaN();
                result.table.push_back(cell);
            }

    const CvCell best = select_best(result.table, kind);
    result.best = best.triple;
    result.best_criterion = best.criterion;
    return result;
}

double squared_error(const Matrix& pred, const Matrix& truth) { return (pred - truth).squaredNorm(); }

}  // namespace

const char* to_string(CriterionKind kind) {
    return kind == CriterionKind::squared_error_min ? "squared_error_min" : "loglik_max";
}

std::vector<double> auto_gamma_grid(ResponseKind kind, Index n) {
    if (kind == ResponseKind::gaussian) return {0.0, 0.25, 0.5, 1.0, 2.0};
    const double s = static_cast<double>(n);
    return {0.0, 0.05 * s, 0.25 * s, s};
}

std::vector<std::vector<Index>> kfold_split(Index n, int K, std::uint64_t seed) {
    if (K < 2 || static_cast<Index>(K) > n)
        throw Error(ErrorKind::InvalidK, "K=" + std::to_string(K) + " with n=" + std::to_string(n));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    // Fisher-Yates with an explicit draw so the result does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<Index>> folds(static_cast<std::size_t>(K));
    for (std::size_t i = 0; i < order.size(); ++i) folds[i % static_cast<std::size_t>(K)].push_back(order[i]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

double bernoulli_loglik(const Matrix& Pi, const Matrix& Y) {
    if (Pi.rows() != Y.rows() || Pi.cols() != Y.cols())
        throw Error(ErrorKind::DimensionMismatch, "probabilities and outcomes differ in shape");
    double total = 0.0;
    for (Index k = 0; k < Y.cols(); ++k)
        for (Index i = 0; i < Y.rows(); ++i) {
            const double p = clamp_probability(Pi(i, k));
            total += Y(i, k) != 0.0 ? std::log(p) : std::log1p(-p);
        }
    return total;
}

CvCell select_best(const std::vector<CvCell>& table, CriterionKind kind) {
    std::vector<const CvCell*> order;
    for (const CvCell& c : table)
        if (c.valid) order.push_back(&c);
    if (order.empty()) throw Error(ErrorKind::DegenerateInput, "no valid cross-validation cell");
    std::stable_sort(order.begin(), order.end(), [](const CvCell* a, const CvCell* b) {
        if (a->triple.Q != b->triple.Q) return a->triple.Q < b->triple.Q;
        if (a->triple.delta != b->triple.delta) return a->triple.delta > b->triple.delta;
        return a->triple.gamma < b->triple.gamma;
    });
    const CvCell* best = order.front();
    for (const CvCell* c : order)
        if (better(c->criterion, best->criterion, kind)) best = c;
    return *best;
}

CvResult cv_gaussian(const Matrix& X_raw, const Matrix& Y_raw, const CvGrid& grid,
                     const CvSettings& settings) {
    if (X_raw.rows() != Y_raw.rows())
        throw Error(ErrorKind::DimensionMismatch, "X and Y row counts differ");
    check_grid(grid, settings, X_raw.rows());
    std::vector<double> deltas = grid.delta_values;
    if (deltas.empty()) {
        const StandardizedData full = standardize(X_raw, Y_raw, ResponseKind::gaussian);
        deltas = auto_deltas(delta_max(full.X.values(), full.Y.values()), full.X.n(), full.X.p(),
                             grid.delta_count);
    }
    auto evaluate = [&](int Q, double gamma, const std::vector<double>& path, const Matrix& Xtr,
                        const Matrix& Ytr, const Matrix& Xte, const Matrix& Yte, PathScore& s) {
        if (Q > Ytr.cols()) throw Error(ErrorKind::InvalidArgument, "Q exceeds the number of responses");
        const StandardizedData data = standardize(Xtr, Ytr, ResponseKind::gaussian);
        const auto fits =
            fit_path_standardized(data, Q, gamma, path, settings.gaussian, settings.known, &s.error);
        for (std::size_t i = 0; i < fits.size(); ++i) s.criterion[i] = squared_error(predict(fits[i], Xte), Yte);
    };
    return run_cv(X_raw, Y_raw, grid, settings, CriterionKind::squared_error_min, deltas, evaluate);
}

CvResult cv_binomial(const Matrix& X_raw, const Matrix& Y, const CvGrid& grid,
                     const CvSettings& settings) {
    if (X_raw.rows() != Y.rows()) throw Error(ErrorKind::DimensionMismatch, "X and Y row counts differ");
    check_grid(grid, settings, X_raw.rows());
    std::vector<double> deltas = grid.delta_values;
    if (deltas.empty()) {
        const StandardizedData full = standardize(X_raw, Y, ResponseKind::binomial);
        deltas = auto_deltas(delta_max_binomial(full.X.values(), full.Y.values()), full.X.n(),
                             full.X.p(), grid.delta_count);
    }
    auto evaluate = [&](int Q, double gamma, const std::vector<double>& path, const Matrix& Xtr,
                        const Matrix& Ytr, const Matrix& Xte, const Matrix& Yte, PathScore& s) {
        if (Q > Ytr.cols()) throw Error(ErrorKind::InvalidArgument, "Q exceeds the number of responses");
        const StandardizedData data = standardize(Xtr, Ytr, ResponseKind::binomial);
        const auto fits = fit_binomial_path_standardized(data, Q, gamma, path, settings.binomial,
                                                         settings.known, &s.error);
        for (std::size_t i = 0; i < fits.size(); ++i)
            s.criterion[i] = bernoulli_loglik(predict_proba(fits[i], Xte), Yte);
    };
    return run_cv(X_raw, Y, grid, settings, CriterionKind::loglik_max, deltas, evaluate);
}

namespace {

// Fold-summed criterion per response for every (gamma, delta) cell; `score`
// fills one (fold, gamma) block of a responses x deltas matrix.
template <class Score>
SenSelection run_sen_cv(const Matrix& X_raw, const Matrix& Y_raw, const CvGrid& grid,
                        const std::vector<double>& deltas, CriterionKind kind, Score score) {
    const Index n = X_raw.rows(), r = Y_raw.cols();
    if (grid.gamma_values.empty()) throw Error(ErrorKind::InvalidArgument, "empty gamma grid");
    const auto folds = kfold_split(n, grid.K, grid.seed);
    const DeltaPath path = resolve_deltas(deltas);
    const std::size_t nG = grid.gamma_values.size(), nF = folds.size();
    std::vector<Matrix> blocks(nG * nF);

#pragma omp parallel for schedule(dynamic) num_threads(thread_budget())
    for (std::size_t t = 0; t < nG * nF; ++t) {
        const std::size_t f = t % nF, g = t / nF;
        Matrix& block = blocks[t];
        block = Matrix::Constant(r, static_cast<Index>(path.values.size()),
                                 std::numeric_limits<double>::quiet_NaN());
        try {
            const std::vector<Index> train = complement(n, folds[f]);
            score(grid.gamma_values[g], path.values, take_rows(X_raw, train), take_rows(Y_raw, train),
                  take_rows(X_raw, folds[f]), take_rows(Y_raw, folds[f]), block);
        } catch (const std::exception&) {
            // Cells already hold NaN for whatever was not reached.
        }
    }

    SenSelection sel;
    sel.criterion = Matrix::Zero(r, static_cast<Index>(nG * deltas.size()));
    for (std::size_t g = 0; g < nG; ++g)
        for (std::size_t d = 0; d < deltas.size(); ++d) {
            const Index col = static_cast<Index>(g * deltas.size() + d);
            sel.cells.emplace_back(grid.gamma_values[g], deltas[d]);
            for (std::size_t f = 0; f < nF; ++f)
                sel.criterion.col(col) += blocks[g * nF + f].col(static_cast<Index>(path.slot[d]));
        }

    sel.gamma.resize(static_cast<std::size_t>(r));
    sel.delta.resize(static_cast<std::size_t>(r));
    for (Index k = 0; k < r; ++k) {
        std::vector<CvCell> cells;
        for (std::size_t c = 0; c < sel.cells.size(); ++c) {
            const double v = sel.criterion(k, static_cast<Index>(c));
            cells.push_back(CvCell{TuningTriple{1, sel.cells[c].first, sel.cells[c].second}, v,
                                   std::isfinite(v)});
        }
        const CvCell best = select_best(cells, kind);
        sel.gamma[static_cast<std::size_t>(k)] = best.triple.gamma;
        sel.delta[static_cast<std::size_t>(k)] = best.triple.delta;
    }
    return sel;
}

}  // namespace

SenSelection cv_sen_gaussian(const Matrix& X_raw, const Matrix& Y_raw, const CvGrid& grid,
                             const SolverSettings& settings) {
    if (X_raw.rows() != Y_raw.rows()) throw Error(ErrorKind::DimensionMismatch, "X and Y row counts differ");
    std::vector<double> deltas = grid.delta_values;
    if (deltas.empty()) {
        const StandardizedData full = standardize(X_raw, Y_raw, ResponseKind::gaussian);
        deltas = auto_deltas(delta_max(full.X.values(), full.Y.values()), full.X.n(), full.X.p(),
                             grid.delta_count);
    }
    auto score = [&](double gamma, const std::vector<double>& path, const Matrix& Xtr,
                     const Matrix& Ytr, const Matrix& Xte, const Matrix& Yte, Matrix& block) {
        const StandardizedData data = standardize(Xtr, Ytr, ResponseKind::gaussian);
        const Matrix Xs = data.standardizer.transform_x(Xte);
        Matrix B = Matrix::Zero(Xtr.cols(), Ytr.cols());
        for (std::size_t d = 0; d < path.size(); ++d) {
            B = sen_init(data.X.values(), data.Y.values(), gamma, path[d], settings, &B);
            const Matrix pred = data.standardizer.inverse_y(Xs * B);
            block.col(static_cast<Index>(d)) = (pred - Yte).colwise().squaredNorm().transpose();
        }
    };
    return run_sen_cv(X_raw, Y_raw, grid, deltas, CriterionKind::squared_error_min, score);
}

SenSelection cv_sen_binomial(const Matrix& X_raw, const Matrix& Y, const CvGrid& grid,
                             const BinomialSolverSettings& settings) {
    if (X_raw.rows() != Y.rows()) throw Error(ErrorKind::DimensionMismatch, "X and Y row counts differ");
    std::vector<double> deltas = grid.delta_values;
    if (deltas.empty()) {
        const StandardizedData full = standardize(X_raw, Y, ResponseKind::binomial);
        deltas = auto_deltas(delta_max_binomial(full.X.values(), full.Y.values()), full.X.n(),
                             full.X.p(), grid.delta_count);
    }
    auto score = [&](double gamma, const std::vector<double>& path, const Matrix& Xtr,
                     const Matrix& Ytr, const Matrix& Xte, const Matrix& Yte, Matrix& block) {
        const StandardizedData data = standardize(Xtr, Ytr, ResponseKind::binomial);
        const Matrix U = design_with_intercept(data.X.values());
        const Matrix Ute = design_with_intercept(data.standardizer.transform_x(Xte));
        // Responses are fitted one at a time so a failure only loses that response.
        for (Index k = 0; k < Ytr.cols(); ++k) {
            const Matrix yk = Ytr.col(k);
            Matrix theta;
            for (std::size_t d = 0; d < path.size(); ++d) {
                try {
                    theta = sen_glm_init(U, yk, gamma, path[d], settings, d == 0 ? nullptr : &theta).Theta;
                } catch (const Error&) {
                    break;
                }
                const Matrix pi = (Ute * theta).unaryExpr([](double e) { return logistic(e); });
                block(k, static_cast<Index>(d)) = bernoulli_loglik(pi, Yte.col(k));
            }
        }
    };
    return run_sen_cv(X_raw, Y, grid, deltas, CriterionKind::loglik_max, score);
}

Matrix sen_fit_gaussian(const StandardizedData& data, const std::vector<double>& gamma,
                        const std::vector<double>& delta, const SolverSettings& settings) {
    const Matrix& X = data.X.values();
    const Matrix& Y = data.Y.values();
    if (gamma.size() != static_cast<std::size_t>(Y.cols()) || delta.size() != gamma.size())
        throw Error(ErrorKind::DimensionMismatch, "one (gamma, delta) pair per response is required");
    Matrix B(X.cols(), Y.cols());
    for (Index k = 0; k < Y.cols(); ++k)
        B.col(k) = sen_init(X, Y.col(k), gamma[static_cast<std::size_t>(k)],
                            delta[static_cast<std::size_t>(k)], settings);
    return B;
}

Matrix sen_fit_binomial(const StandardizedData& data, const std::vector<double>& gamma,
                        const std::vector<double>& delta, const BinomialSolverSettings& settings) {
    const Matrix U = design_with_intercept(data.X.values());
    const Matrix& Y = data.Y.values();
    if (gamma.size() != static_cast<std::size_t>(Y.cols()) || delta.size() != gamma.size())
        throw Error(ErrorKind::DimensionMismatch, "one (gamma, delta) pair per response is required");
    Matrix T(U.cols(), Y.cols());
    for (Index k = 0; k < Y.cols(); ++k)
        T.col(k) = sen_glm_init(U, Y.col(k), gamma[static_cast<std::size_t>(k)],
                                delta[static_cast<std::size_t>(k)], settings)
                       .Theta;
    return T;
}

}  // namespace mcen
