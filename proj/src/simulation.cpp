#include "mcen/simulation.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <cmath>
#include <random>

#include "mcen/parallel.hpp"

namespace mcen {

namespace {

constexpr int kResponses = 15;
constexpr int kClusterSize = 5;

Matrix draw_normal(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Matrix M(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) M(i, j) = z(rng);
    return M;
}

Matrix truth_for(const SimDesign& design) {
    if (design.B_star) {
        if (design.B_star->rows() != design.p)
            throw Error(ErrorKind::DimensionMismatch, "B_star rows must equal p");
        return *design.B_star;
    }
    return make_coefficients(design.eta, design.lambda, design.p);
}

Matrix draw_covariates(Index rows, const Eigen::LLT<Matrix>& chol, std::mt19937_64& rng) {
    return draw_normal(rows, chol.matrixL().rows(), rng) * Matrix(chol.matrixL()).transpose();
}

void check_design(const SimDesign& design) {
    if (design.n < 2 || design.p < 1 || design.n_test < 0)
        throw Error(ErrorKind::InvalidArgument, "simulation sizes must be positive");
    if (!(design.rho > -1.0 / 11.0 && design.rho < 1.0))
        throw Error(ErrorKind::InvalidArgument, "rho outside the positive-definite range");
    if (design.replications < 1) throw Error(ErrorKind::InvalidArgument, "replications must be >= 1");
}

// Packs a per-response fit into the fit types so the shared predict and
// coefficient mapping apply.
McenFit wrap_gaussian(Matrix B, const Standardizer& s) {
    McenFit f;
    f.B_hat.values = std::move(B);
    f.standardizer = s;
    return f;
}

BinomialFit wrap_binomial(Matrix T, const Standardizer& s) {
    BinomialFit f;
    f.Theta_hat.values = std::move(T);
    f.Theta_hat.has_intercept_row = true;
    f.standardizer = s;
    return f;
}

void add_selection(std::vector<MetricRecord>& out, Method m, int rep, const Matrix& B_hat,
                   const Matrix& B_star) {
    const SelectionCounts c = tv_fv(B_hat, B_star);
    out.push_back({m, rep, "mse", mse_coef(B_hat, B_star)});
    out.push_back({m, rep, "tv", static_cast<double>(c.tv)});
    out.push_back({m, rep, "fv", static_cast<double>(c.fv)});
}

}  // namespace

const char* to_string(Method method) {
    switch (method) {
    case Method::mcen: return "MCEN";
    case Method::tmcen: return "TMCEN";
    case Method::sen: return "SEN";
    }
    return "?";
}

Method method_from_string(const std::string& name) {
    std::string up = name;
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    if (up == "MCEN") return Method::mcen;
    if (up == "TMCEN") return Method::tmcen;
    if (up == "SEN") return Method::sen;
    throw Error(ErrorKind::InvalidArgument, "unknown method '" + name + "'");
}

SimDesign SimDesign::desk(ResponseKind kind) {
    SimDesign d;
    d.kind = kind;
    d.rho = kind == ResponseKind::binomial ? 0.9 : 0.7;
    d.eta = kind == ResponseKind::binomial ? 0.75 : 1.0;
    return d;
}

SimDesign SimDesign::paper(ResponseKind kind) {
    SimDesign d = desk(kind);
    d.p = 300;
    d.replications = 50;
    return d;
}

SimProtocol SimProtocol::desk(ResponseKind kind, Index n) {
    SimProtocol p;
    p.delta_count = 20;
    p.K = 5;
    p.gamma_values = kind == ResponseKind::gaussian ? std::vector<double>{0.0, 0.5, 2.0, 8.0}
                                                    : auto_gamma_grid(kind, n);
    return p;
}

SimProtocol SimProtocol::paper(ResponseKind kind, Index n) {
    SimProtocol p;
    p.delta_count = 100;
    p.K = 10;
    p.gamma_values = kind == ResponseKind::gaussian
                         ? std::vector<double>{0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0}
                         : auto_gamma_grid(kind, n);
    return p;
}

Matrix make_coefficients(double eta, double lambda, Index p) {
    Index rows;
    if (p == 12)
        rows = 4;
    else if (p >= 30)
        rows = 10;
    else
        throw Error(ErrorKind::UnsupportedP, "p=" + std::to_string(p) + " (need 12 or >= 30)");
    Matrix B = Matrix::Zero(p, kResponses);
    const double offsets[kClusterSize] = {-1, 0, 1, 2, 3};
    for (Index block = 0; block < 3; ++block)
        for (Index c = 0; c < kClusterSize; ++c)
            B.block(block * rows, block * kClusterSize + c, rows, 1).setConstant(eta + offsets[c] * lambda);
    return B;
}

ClusterPartition true_partition() {
    std::vector<int> labels(kResponses);
    for (int k = 0; k < kResponses; ++k) labels[static_cast<std::size_t>(k)] = k / kClusterSize;
    return ClusterPartition(labels, 3);
}

Matrix covariate_covariance(Index p, double rho) {
    Matrix S = Matrix::Identity(p, p);
    const Index b = std::min<Index>(p, 12);
    S.topLeftCorner(b, b).setConstant(rho);
    S.topLeftCorner(b, b).diagonal().setOnes();
    return S;
}

SimData gen_gaussian(const SimDesign& design, std::uint64_t seed) {
    check_design(design);
    SimData d;
    d.B_star = truth_for(design);
    const Eigen::LLT<Matrix> chol(covariate_covariance(design.p, design.rho));
    std::mt19937_64 rng(seed);
    const Index r = d.B_star.cols();
    d.X = draw_covariates(design.n, chol, rng);
    d.Y = d.X * d.B_star + draw_normal(design.n, r, rng);
    d.X_test = draw_covariates(design.n_test, chol, rng);
    d.Y_test = d.X_test * d.B_star + draw_normal(design.n_test, r, rng);
    return d;
}

SimData gen_binomial(const SimDesign& design, std::uint64_t seed) {
    check_design(design);
    SimData d;
    d.B_star = truth_for(design);
    const Eigen::LLT<Matrix> chol(covariate_covariance(design.p, design.rho));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&](const Matrix& X, Matrix& Pi) {
        Pi = (X * d.B_star).unaryExpr([](double e) { return logistic(e); });
        Matrix Y(Pi.rows(), Pi.cols());
        for (Index i = 0; i < Pi.rows(); ++i)
            for (Index k = 0; k < Pi.cols(); ++k) Y(i, k) = u(rng) < Pi(i, k) ? 1.0 : 0.0;
        return Y;
    };
    Matrix Pi_train;
    d.X = draw_covariates(design.n, chol, rng);
    d.Y = draw(d.X, Pi_train);
    d.X_test = draw_covariates(design.n_test, chol, rng);
    d.Y_test = draw(d.X_test, d.Pi_test);
    return d;
}

SimData generate(const SimDesign& design, std::uint64_t seed) {
    return design.kind == ResponseKind::binomial ? gen_binomial(design, seed) : gen_gaussian(design, seed);
}

double aspe(const Matrix& Y_pred, const Matrix& Y_test) {
    if (Y_pred.rows() != Y_test.rows() || Y_pred.cols() != Y_test.cols())
        throw Error(ErrorKind::DimensionMismatch, "prediction and test shapes differ");
    if (Y_test.size() == 0) throw Error(ErrorKind::InvalidArgument, "empty test set");
    return (Y_pred - Y_test).squaredNorm() / static_cast<double>(Y_test.size());
}

double mse_coef(const Matrix& B_hat, const Matrix& B_star) {
    if (B_hat.rows() != B_star.rows() || B_hat.cols() != B_star.cols())
        throw Error(ErrorKind::DimensionMismatch, "coefficient shapes differ");
    return (B_hat - B_star).squaredNorm();
}

SelectionCounts tv_fv(const Matrix& B_hat, const Matrix& B_star) {
    if (B_hat.rows() != B_star.rows() || B_hat.cols() != B_star.cols())
        throw Error(ErrorKind::DimensionMismatch, "coefficient shapes differ");
    SelectionCounts c;
    for (Index k = 0; k < B_hat.cols(); ++k)
        for (Index j = 0; j < B_hat.rows(); ++j) {
            if (B_hat(j, k) == 0.0) continue;
            if (B_star(j, k) != 0.0)
                ++c.tv;
            else
                ++c.fv;
        }
    return c;
}

double kl_divergence(const Matrix& Pi_hat, const Matrix& Pi_star) {
    if (Pi_hat.rows() != Pi_star.rows() || Pi_hat.cols() != Pi_star.cols())
        throw Error(ErrorKind::DimensionMismatch, "probability shapes differ");
    if (Pi_hat.rows() == 0) throw Error(ErrorKind::InvalidArgument, "empty probability matrix");
    double total = 0.0;
    for (Index k = 0; k < Pi_hat.cols(); ++k)
        for (Index i = 0; i < Pi_hat.rows(); ++i) {
            const double a = Pi_hat(i, k), b = Pi_star(i, k);
            if (!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0))
                throw Error(ErrorKind::InvalidArgument, "probabilities must lie in (0, 1)");
            total += a * std::log(a / b) + (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
        }
    return total / static_cast<double>(Pi_hat.rows());
}

double quantile(std::vector<double> values, double prob) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const double pos = prob * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> SimResult::values(Method method, const std::string& metric) const {
    std::vector<double> out;
    for (const MetricRecord& r : records)
        if (r.method == method && r.metric == metric) out.push_back(r.value);
    return out;
}

std::map<std::string, std::map<std::string, MetricSummary>> SimResult::summary() const {
    std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
    for (const MetricRecord& r : records) grouped[to_string(r.method)][r.metric].push_back(r.value);
    std::map<std::string, std::map<std::string, MetricSummary>> out;
    for (const auto& [method, metrics] : grouped)
        for (const auto& [metric, v] : metrics) {
            MetricSummary s;
            s.q1 = quantile(v, 0.25);
            s.median = quantile(v, 0.5);
            s.q3 = quantile(v, 0.75);
            double sum = 0.0;
            for (double x : v) sum += x;
            s.mean = sum / static_cast<double>(v.size());
            s.count = static_cast<int>(v.size());
            out[method][metric] = s;
        }
    return out;
}

void run_replication(const SimDesign& design, const std::vector<Method>& methods,
                     const SimProtocol& protocol, int index, SimResult& out) {
    const std::uint64_t seed = design.seed + static_cast<std::uint64_t>(index);
    const SimData data = generate(design, seed);
    const bool binomial = design.kind == ResponseKind::binomial;
    const std::size_t slots = static_cast<std::size_t>(index) + 1;
    if (out.mcen_partitions.size() < slots) out.mcen_partitions.resize(slots);
    if (out.mcen_triples.size() < slots) out.mcen_triples.resize(slots);

    CvGrid grid;
    grid.Q_values = protocol.Q_values;
    grid.gamma_values = protocol.gamma_values;
    grid.delta_count = protocol.delta_count;
    grid.K = protocol.K;
    grid.seed = seed;
    CvSettings cv;
    cv.gaussian = protocol.gaussian;
    cv.binomial = protocol.binomial;
    cv.gaussian.kmeans.seed = seed;
    cv.binomial.kmeans.seed = seed;

    for (Method m : methods) {
        try {
            std::vector<MetricRecord> rec;
            if (!binomial) {
                Matrix pred, coef;
                if (m == Method::sen) {
                    const SenSelection sel = cv_sen_gaussian(data.X, data.Y, grid, cv.gaussian.solver);
                    const StandardizedData full = standardize(data.X, data.Y, ResponseKind::gaussian);
                    const McenFit f = wrap_gaussian(
                        sen_fit_gaussian(full, sel.gamma, sel.delta, cv.gaussian.solver), full.standardizer);
                    pred = predict(f, data.X_test);
                    coef = original_scale_coefficients(f);
                } else {
                    CvSettings s = cv;
                    if (m == Method::tmcen) s.known = true_partition();
                    const CvResult res = cv_gaussian(data.X, data.Y, grid, s);
                    const McenFit f =
                        m == Method::tmcen
                            ? fit_known_partition(data.X, data.Y, *s.known, res.best.gamma, res.best.delta,
                                                  cv.gaussian)
                            : fit(data.X, data.Y, res.best, cv.gaussian);
                    if (m == Method::mcen) {
                        out.mcen_partitions[static_cast<std::size_t>(index)] = f.D_hat.canonical();
                        out.mcen_triples[static_cast<std::size_t>(index)] = res.best;
                    }
                    pred = predict(f, data.X_test);
                    coef = original_scale_coefficients(f);
                }
                rec.push_back({m, index, "aspe", aspe(pred, data.Y_test)});
                add_selection(rec, m, index, coef, data.B_star);
            } else {
                Matrix pi, coef;
                if (m == Method::sen) {
                    const SenSelection sel = cv_sen_binomial(data.X, data.Y, grid, cv.binomial.solver);
                    const StandardizedData full = standardize(data.X, data.Y, ResponseKind::binomial);
                    const BinomialFit f = wrap_binomial(
                        sen_fit_binomial(full, sel.gamma, sel.delta, cv.binomial.solver), full.standardizer);
                    pi = predict_proba(f, data.X_test);
                    coef = original_scale_coefficients(f);
                } else {
                    CvSettings s = cv;
                    if (m == Method::tmcen) s.known = true_partition();
                    const CvResult res = cv_binomial(data.X, data.Y, grid, s);
                    const BinomialFit f =
                        m == Method::tmcen
                            ? fit_binomial_known_partition(data.X, data.Y, *s.known, res.best.gamma,
                                                           res.best.delta, cv.binomial)
                            : fit_binomial(data.X, data.Y, res.best, cv.binomial);
                    if (m == Method::mcen) {
                        out.mcen_partitions[static_cast<std::size_t>(index)] = f.D_hat.canonical();
                        out.mcen_triples[static_cast<std::size_t>(index)] = res.best;
                    }
                    pi = predict_proba(f, data.X_test);
                    coef = original_scale_coefficients(f);
                }
                rec.push_back({m, index, "kl", kl_divergence(pi, data.Pi_test)});
                add_selection(rec, m, index, coef.bottomRows(coef.rows() - 1), data.B_star);
            }
            out.records.insert(out.records.end(), rec.begin(), rec.end());
        } catch (const std::exception& e) {
            out.failures.push_back({m, index, e.what()});
        }
    }
}

SimResult run_replications(const SimDesign& design, const std::vector<Method>& methods,
                           const SimProtocol& protocol) {
    check_design(design);
    truth_for(design);  // reject unsupported p before any work
    const int reps = design.replications;
    std::vector<SimResult> parts(static_cast<std::size_t>(reps));
#pragma omp parallel for schedule(dynamic) num_threads(thread_budget())
    for (int i = 0; i < reps; ++i) {
        SimResult& part = parts[static_cast<std::size_t>(i)];
        part.mcen_partitions.resize(static_cast<std::size_t>(reps));
        part.mcen_triples.resize(static_cast<std::size_t>(reps));
        run_replication(design, methods, protocol, i, part);
    }
    SimResult out;
    out.mcen_partitions.resize(static_cast<std::size_t>(reps));
    out.mcen_triples.resize(static_cast<std::size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        SimResult& part = parts[static_cast<std::size_t>(i)];
        out.records.insert(out.records.end(), part.records.begin(), part.records.end());
        out.failures.insert(out.failures.end(), part.failures.begin(), part.failures.end());
        out.mcen_partitions[static_cast<std::size_t>(i)] = part.mcen_partitions[static_cast<std::size_t>(i)];
        out.mcen_triples[static_cast<std::size_t>(i)] = part.mcen_triples[static_cast<std::size_t>(i)];
    }
    return out;
}

}  // namespace mcen
