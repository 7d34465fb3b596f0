#include <random>

#include "doctest.h"
#include "mcen/mcen_gaussian.hpp"
#include "mcen/parallel.hpp"
#include "mcen/simulation.hpp"
#include "oracles.hpp"

using namespace mcen;

namespace {

FitSettings tight() {
    FitSettings s;
    s.solver.tol = 1e-12;
    s.solver.max_sweeps = 200000;
    return s;
}

StandardizedData make_data(Index n, Index p, Index r, std::mt19937_64& rng) {
    Matrix X = oracle::normal_matrix(n, p, rng);
    Matrix Y = X * oracle::normal_matrix(p, r, rng) + oracle::normal_matrix(n, r, rng);
    return standardize(X, Y, ResponseKind::gaussian);
}

}  // namespace

TEST_CASE("sen_init examples") {
    std::mt19937_64 rng(1);
    auto d = make_data(30, 5, 3, rng);
    const Matrix& X = d.X.values();
    const Matrix& Y = d.Y.values();
    CHECK(sen_init(X, Y, 0.5, delta_max(X, Y)).isZero(0.0));

    SolverSettings s;
    s.tol = 1e-13;
    s.max_sweeps = 100000;
    const Matrix ols = (X.transpose() * X).ldlt().solve(X.transpose() * Y);
    CHECK((sen_init(X, Y, 0.0, 0.0, s) - ols).cwiseAbs().maxCoeff() <= 1e-8);

    for (double gamma : {0.1, 1.0})
        for (double frac : {0.05, 0.3}) {
            const double delta = frac * delta_max(X, Y);
            const Matrix B = sen_init(X, Y, gamma, delta, s);
            for (Index k = 0; k < 3; ++k) {
                const Vector ref = oracle::elastic_net(X, Y.col(k), delta / 2, gamma);
                CHECK((B.col(k) - ref).cwiseAbs().maxCoeff() <= 1e-6);
            }
        }
}

TEST_CASE("gamma = 0 fit equals independent lasso fits") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 5; ++t) {
        auto d = make_data(40, 8, 4, rng);
        const double delta = 0.1 * delta_max(d.X.values(), d.Y.values());
        const McenFit f = fit_standardized(d, TuningTriple{2, 0.0, delta}, tight());
        for (Index k = 0; k < 4; ++k) {
            const Vector ref = oracle::elastic_net(d.X.values(), d.Y.values().col(k), delta / 2, 0.0);
            CHECK((f.B_hat.values.col(k) - ref).cwiseAbs().maxCoeff() <= 1e-6);
        }
        CHECK(f.D_hat.Q() == 2);
    }
}

TEST_CASE("Q = r and gamma = 0 give the same coefficients") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 5; ++t) {
        auto d = make_data(35, 6, 4, rng);
        const double delta = 0.05 * delta_max(d.X.values(), d.Y.values());
        const McenFit a = fit_standardized(d, TuningTriple{4, 1.5, delta}, tight());
        const McenFit b = fit_standardized(d, TuningTriple{2, 0.0, delta}, tight());
        CHECK((a.B_hat.values - b.B_hat.values).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("Q = 1 equals the fixed-group solve on one cluster") {
    std::mt19937_64 rng(4);
    auto d = make_data(40, 6, 3, rng);
    const Matrix& X = d.X.values();
    const Matrix& Y = d.Y.values();
    const double gamma = 0.7, delta = 0.1 * delta_max(X, Y);
    const McenFit f = fit_standardized(d, TuningTriple{1, gamma, delta}, tight());
    CHECK(f.D_hat.Q() == 1);
    auto ref = solve_fixed_groups(GramCache::build(X, Y), ClusterPartition::single_cluster(3), gamma,
                                  delta, Matrix::Zero(6, 3), tight().solver);
    CHECK((f.B_hat.values - ref.B).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(f.converged);
}

TEST_CASE("objective trace never increases across half-steps") {
    std::mt19937_64 rng(5);
    int violations = 0;
    for (int t = 0; t < 40; ++t) {
        const Index r = 3 + t % 6;
        auto d = make_data(30 + t, 5 + t % 20, r, rng);
        const int Q = 1 + t % static_cast<int>(r);
        FitSettings s;
        s.kmeans.seed = static_cast<std::uint64_t>(t);
        s.solver.tol = 1e-10;
        const McenFit f = fit_standardized(
            d, TuningTriple{Q, 0.5 * (t % 5), 0.05 * delta_max(d.X.values(), d.Y.values())}, s);
        CHECK(f.outer_iters >= 1);
        for (std::size_t i = 1; i < f.objective_trace.size(); ++i)
            if (f.objective_trace[i] > f.objective_trace[i - 1] + 1e-10 * (1 + std::abs(f.objective_trace[i - 1])))
                ++violations;
    }
    CHECK(violations == 0);
}

TEST_CASE("fully sparse start returns zero coefficients and one cluster") {
    std::mt19937_64 rng(6);
    auto d = make_data(20, 4, 3, rng);
    const McenFit f =
        fit_standardized(d, TuningTriple{2, 1.0, 1.01 * delta_max(d.X.values(), d.Y.values())});
    CHECK(f.all_zero_init);
    CHECK(f.B_hat.values.isZero(0.0));
    CHECK(f.D_hat.Q() == 1);
    CHECK(f.outer_iters == 1);
}

TEST_CASE("Q larger than r is rejected") {
    std::mt19937_64 rng(7);
    auto d = make_data(20, 3, 2, rng);
    CHECK_THROWS_AS(fit_standardized(d, TuningTriple{3, 1.0, 0.1}), Error);
    CHECK_THROWS_AS(fit_standardized(d, TuningTriple{0, 1.0, 0.1}), Error);
}

TEST_CASE("predict") {
    std::mt19937_64 rng(8);
    Matrix X = oracle::normal_matrix(30, 4, rng) * 2.0;
    X.array() += 1.5;
    Matrix Y = X * oracle::normal_matrix(4, 2, rng) + oracle::normal_matrix(30, 2, rng);
    Y.array() += 3.0;

    // gamma = delta = 0 with full rank: OLS with intercept.
    const McenFit ols = fit(X, Y, TuningTriple{1, 0.0, 0.0}, tight());
    Matrix Xi(30, 5);
    Xi << Matrix::Ones(30, 1), X;
    const Matrix fitted = Xi * (Xi.transpose() * Xi).ldlt().solve(Xi.transpose() * Y);
    CHECK((predict(ols, X) - fitted).cwiseAbs().maxCoeff() <= 1e-8);

    // Zero coefficients predict the training means.
    McenFit zero = fit(X, Y, TuningTriple{1, 0.0, 1e6});
    const Matrix P = predict(zero, X);
    for (Index k = 0; k < 2; ++k) CHECK((P.col(k).array() - Y.col(k).mean()).abs().maxCoeff() <= 1e-10);

    // Manual standardize-multiply-invert.
    const McenFit f = fit(X, Y, TuningTriple{2, 0.5, 0.05});
    Matrix Xn = oracle::normal_matrix(7, 4, rng);
    const Standardizer& s = f.standardizer;
    Matrix manual(7, 2);
    for (Index i = 0; i < 7; ++i)
        for (Index k = 0; k < 2; ++k) {
            double v = 0.0;
            for (Index j = 0; j < 4; ++j) v += (Xn(i, j) - s.x_center[j]) / s.x_scale[j] * f.B_hat.values(j, k);
            manual(i, k) = v * s.y_scale[k] + s.y_center[k];
        }
    CHECK((predict(f, Xn) - manual).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK_THROWS_AS(predict(f, Matrix::Zero(3, 5)), Error);

    // Original-scale coefficients reproduce predictions up to the intercept.
    const Matrix Bo = original_scale_coefficients(f);
    const Matrix diff = predict(f, Xn) - Xn * Bo;
    for (Index k = 0; k < 2; ++k) CHECK((diff.col(k).array() - diff(0, k)).abs().maxCoeff() <= 1e-10);
}

TEST_CASE("fit_path") {
    std::mt19937_64 rng(9);
    Matrix X = oracle::normal_matrix(40, 6, rng);
    Matrix Y = X * oracle::normal_matrix(6, 3, rng) + oracle::normal_matrix(40, 3, rng);
    const auto d = standardize(X, Y, ResponseKind::gaussian);
    const double dmax = delta_max(d.X.values(), d.Y.values());

    auto single = fit_path(X, Y, 1, 0.0, {dmax});
    REQUIRE(single.size() == 1);
    CHECK(single[0].B_hat.values.isZero(0.0));

    CHECK_THROWS_AS(fit_path(X, Y, 1, 0.0, {0.1, 0.2}), Error);
    CHECK(fit_path(X, Y, 1, 0.0, {}).size() == 100);

    std::vector<double> grid;
    for (int i = 1; i <= 5; ++i) grid.push_back(dmax * std::pow(0.4, i));
    FitSettings s;
    s.solver.tol = 1e-10;
    s.kmeans.seed = 3;
    auto path = fit_path(X, Y, 2, 0.8, grid, s);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const McenFit cold = fit(X, Y, TuningTriple{2, 0.8, grid[i]}, s);
        CHECK(path[i].objective_trace.back() ==
              doctest::Approx(cold.objective_trace.back()).epsilon(1e-5));
    }

    // Known-partition paths keep the supplied partition at every point.
    auto known = fit_path_standardized(d, 2, 0.8, grid, s, ClusterPartition({0, 1, 1}, 2));
    for (const auto& f : known) {
        CHECK(f.known_partition);
        CHECK(f.D_hat.same_partition(ClusterPartition({0, 1, 1}, 2)));
    }
}

TEST_CASE("default_delta_path") {
    auto a = default_delta_path(2.0, 100, 12, 100);
    CHECK(a.size() == 100);
    CHECK(a.front() == 2.0);
    CHECK(a.back() == doctest::Approx(0.002));
    auto b = default_delta_path(2.0, 30, 60, 10);
    CHECK(b.back() == doctest::Approx(0.1));
    for (std::size_t i = 1; i < b.size(); ++i) CHECK(b[i] < b[i - 1]);
    CHECK(default_delta_path(0.0, 10, 2).size() == 1);
}

TEST_CASE("nonzero count mostly decreases with delta on the simulation design") {
    SimDesign design = SimDesign::desk(ResponseKind::gaussian);
    design.n_test = 0;
    int monotone = 0, pairs = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const SimData data = gen_gaussian(design, seed);
        auto path = fit_path(data.X, data.Y, 3, 0.5, {}, FitSettings{});
        for (std::size_t i = 1; i < path.size(); ++i) {
            const long before = (path[i - 1].B_hat.values.array() != 0.0).count();
            const long after = (path[i].B_hat.values.array() != 0.0).count();
            ++pairs;
            if (after >= before) ++monotone;
        }
    }
    MESSAGE("monotone pairs: " << monotone << "/" << pairs);
    CHECK(monotone >= 0.9 * pairs);
}

TEST_CASE("true clusters are recovered on the simulation design") {
    SimDesign design = SimDesign::desk(ResponseKind::gaussian);
    design.n_test = 0;
    int recovered = 0;
    const int reps = 50;
    for (int i = 0; i < reps; ++i) {
        const SimData data = gen_gaussian(design, 1000 + static_cast<std::uint64_t>(i));
        const auto d = standardize(data.X, data.Y, ResponseKind::gaussian);
        FitSettings s;
        s.kmeans.seed = static_cast<std::uint64_t>(i);
        const McenFit f =
            fit_standardized(d, TuningTriple{3, 0.5, 0.05 * delta_max(d.X.values(), d.Y.values())}, s);
        if (f.D_hat.same_partition(true_partition())) ++recovered;
    }
    MESSAGE("recovered " << recovered << "/" << reps);
    CHECK(recovered >= 40);
}

TEST_CASE("fit is reproducible and independent of the thread budget") {
    std::mt19937_64 rng(10);
    auto d = make_data(50, 10, 6, rng);
    FitSettings s;
    s.kmeans.seed = 42;
    const TuningTriple tr{3, 1.0, 0.05};
    set_thread_budget(1);
    const McenFit a = fit_standardized(d, tr, s);
    set_thread_budget(4);
    const McenFit b = fit_standardized(d, tr, s);
    set_thread_budget(0);
    CHECK(a.B_hat.values == b.B_hat.values);
    CHECK(a.D_hat == b.D_hat);
    CHECK(a.objective_trace == b.objective_trace);
}
