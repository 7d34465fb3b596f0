#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "mcen/model_selection.hpp"
#include "mcen/parallel.hpp"
#include "mcen/simulation.hpp"
#include "oracles.hpp"

using namespace mcen;

namespace {

const CvCell& cell_for(const CvResult& res, int Q, double gamma, double delta) {
    for (const CvCell& c : res.table)
        if (c.triple.Q == Q && c.triple.gamma == gamma && c.triple.delta == delta) return c;
    throw std::runtime_error("cell not found");
}

Matrix bernoulli(const Matrix& eta, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    Matrix Y(eta.rows(), eta.cols());
    for (Index i = 0; i < eta.rows(); ++i)
        for (Index k = 0; k < eta.cols(); ++k) Y(i, k) = u(rng) < 1 / (1 + std::exp(-eta(i, k))) ? 1 : 0;
    return Y;
}

}  // namespace

TEST_CASE("kfold_split examples") {
    auto a = kfold_split(10, 5, 1);
    REQUIRE(a.size() == 5);
    for (const auto& f : a) CHECK(f.size() == 2);
    auto b = kfold_split(7, 3, 1);
    std::multiset<std::size_t> sizes;
    for (const auto& f : b) sizes.insert(f.size());
    CHECK(sizes == std::multiset<std::size_t>{2, 2, 3});
}

TEST_CASE("kfold_split partitions the rows") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        const Index n = 2 + static_cast<Index>(rng() % 60);
        const int K = 2 + static_cast<int>(rng() % static_cast<unsigned>(n - 1));
        auto folds = kfold_split(n, K, rng());
        std::vector<int> seen(static_cast<std::size_t>(n), 0);
        std::size_t lo = static_cast<std::size_t>(n), hi = 0;
        for (const auto& f : folds) {
            lo = std::min(lo, f.size());
            hi = std::max(hi, f.size());
            for (Index i : f) ++seen[static_cast<std::size_t>(i)];
        }
        CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
        CHECK(hi - lo <= 1);
    }
    CHECK(kfold_split(20, 4, 9) == kfold_split(20, 4, 9));
    CHECK_FALSE(kfold_split(20, 4, 9) == kfold_split(20, 4, 10));
}

TEST_CASE("kfold_split rejects bad K") {
    for (int K : {0, 1, 11}) {
        try {
            kfold_split(10, K, 0);
            FAIL("expected InvalidK");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::InvalidK);
        }
    }
}

TEST_CASE("bernoulli_loglik closed forms") {
    Matrix Y(4, 2);
    Y << 1, 0, 0, 0, 1, 1, 0, 1;
    CHECK(bernoulli_loglik(Matrix::Constant(4, 2, 0.5), Y) == doctest::Approx(8 * std::log(0.5)));
    const double perfect = bernoulli_loglik(Y, Y);
    CHECK(perfect < 0);
    CHECK(perfect == doctest::Approx(8 * std::log1p(-kProbabilityClamp)));
}

TEST_CASE("select_best tie-breaks") {
    std::vector<CvCell> t{{{3, 0.5, 1.0}, 5.0, true},
                          {{2, 1.0, 1.0}, 5.0, true},
                          {{2, 0.5, 2.0}, 5.0, true},
                          {{2, 0.25, 2.0}, 5.0, true},
                          {{1, 0.0, 0.1}, 1.0, false}};
    const CvCell best = select_best(t, CriterionKind::squared_error_min);
    CHECK(best.triple == TuningTriple{2, 0.25, 2.0});
    t.push_back({{4, 0.0, 0.0}, 4.0, true});
    CHECK(select_best(t, CriterionKind::squared_error_min).triple == TuningTriple{4, 0.0, 0.0});
    CHECK(select_best(t, CriterionKind::loglik_max).triple == TuningTriple{2, 0.25, 2.0});
    CHECK_THROWS_AS(select_best({{{1, 0, 0}, 0, false}}, CriterionKind::loglik_max), Error);
}

TEST_CASE("cv_gaussian: held-out rows are never used for fitting") {
    std::mt19937_64 rng(2);
    Matrix X = oracle::normal_matrix(40, 5, rng);
    Matrix Y = X * oracle::normal_matrix(5, 3, rng) + oracle::normal_matrix(40, 3, rng);
    CvGrid grid;
    grid.Q_values = {2};
    grid.gamma_values = {0.5};
    grid.delta_values = {0.3, 0.1};
    grid.K = 4;
    grid.seed = 5;
    const CvResult res = cv_gaussian(X, Y, grid);
    for (int f = 0; f < 4; ++f) {
        const auto& test = res.folds[static_cast<std::size_t>(f)];
        std::vector<Index> train;
        for (Index i = 0; i < 40; ++i)
            if (!std::binary_search(test.begin(), test.end(), i)) train.push_back(i);
        Matrix Xtr(static_cast<Index>(train.size()), 5), Ytr(static_cast<Index>(train.size()), 3);
        Matrix Xte(static_cast<Index>(test.size()), 5), Yte(static_cast<Index>(test.size()), 3);
        for (std::size_t i = 0; i < train.size(); ++i) {
            Xtr.row(static_cast<Index>(i)) = X.row(train[i]);
            Ytr.row(static_cast<Index>(i)) = Y.row(train[i]);
        }
        for (std::size_t i = 0; i < test.size(); ++i) {
            Xte.row(static_cast<Index>(i)) = X.row(test[i]);
            Yte.row(static_cast<Index>(i)) = Y.row(test[i]);
        }
        const auto path = fit_path(Xtr, Ytr, 2, 0.5, {0.3, 0.1});
        for (const CvRecord& r : res.records)
            if (r.fold == f) {
                const auto& fit = r.triple.delta == 0.3 ? path[0] : path[1];
                CHECK(r.criterion == doctest::Approx((predict(fit, Xte) - Yte).squaredNorm()).epsilon(1e-12));
            }
    }
    // Permuting held-out responses of fold 0 leaves fold 0's fit alone, so its
    // criterion equals the recomputation with permuted targets.
    Matrix Yp = Y;
    const auto& f0 = res.folds[0];
    for (std::size_t i = 0; i + 1 < f0.size(); i += 2) Yp.row(f0[i]).swap(Yp.row(f0[i + 1]));
    const CvResult perm = cv_gaussian(X, Yp, grid);
    double shuffled_sum = 0, original_sum = 0;
    for (std::size_t i = 0; i < res.records.size(); ++i)
        if (res.records[i].fold == 0) {
            original_sum += res.records[i].criterion;
            shuffled_sum += perm.records[i].criterion;
        }
    CHECK(shuffled_sum != original_sum);
}

TEST_CASE("cv_gaussian: duplicates, gamma = 0 invariance and invalid cells") {
    std::mt19937_64 rng(3);
    Matrix X = oracle::normal_matrix(30, 4, rng);
    Matrix Y = X * oracle::normal_matrix(4, 3, rng) + oracle::normal_matrix(30, 3, rng);
    CvGrid grid;
    grid.Q_values = {1, 2, 3, 4};
    grid.gamma_values = {0.0, 1.0, 1.0};
    grid.delta_values = {0.5, 0.2, 0.2, 0.05};
    grid.K = 3;
    const CvResult res = cv_gaussian(X, Y, grid);
    CHECK(res.table.size() == 4 * 3 * 4);
    for (int Q = 1; Q <= 3; ++Q) {
        CHECK(cell_for(res, Q, 0.0, 0.2).criterion ==
              doctest::Approx(cell_for(res, 1, 0.0, 0.2).criterion).epsilon(1e-9));
        CHECK(res.table[static_cast<std::size_t>((Q - 1) * 12 + 4 + 1)].criterion ==
              res.table[static_cast<std::size_t>((Q - 1) * 12 + 4 + 2)].criterion);
    }
    for (const CvCell& c : res.table) {
        if (c.triple.Q == 4)
            CHECK_FALSE(c.valid);
        else
            CHECK(c.valid);
    }
    CHECK(res.best.Q <= 3);
    CHECK(res.criterion_kind == CriterionKind::squared_error_min);
    for (const CvRecord& r : res.records)
        if (r.triple.Q == 4) CHECK(r.error.find("exceeds") != std::string::npos);
}

TEST_CASE("cv_gaussian: single cell and reproducibility") {
    std::mt19937_64 rng(4);
    Matrix X = oracle::normal_matrix(25, 3, rng);
    Matrix Y = X * oracle::normal_matrix(3, 2, rng) + oracle::normal_matrix(25, 2, rng);
    CvGrid grid;
    grid.Q_values = {2};
    grid.gamma_values = {0.5};
    grid.delta_values = {0.1};
    grid.K = 5;
    const CvResult a = cv_gaussian(X, Y, grid);
    CHECK(a.best == TuningTriple{2, 0.5, 0.1});
    grid.Q_values = {1, 2};
    grid.gamma_values = {0.0, 0.5};
    grid.delta_values = {};
    grid.delta_count = 8;
    set_thread_budget(1);
    const CvResult b = cv_gaussian(X, Y, grid);
    set_thread_budget(3);
    const CvResult c = cv_gaussian(X, Y, grid);
    set_thread_budget(0);
    REQUIRE(b.table.size() == c.table.size());
    for (std::size_t i = 0; i < b.table.size(); ++i) CHECK(b.table[i].criterion == c.table[i].criterion);
    CHECK(b.best == c.best);
    CHECK(b.delta_values.size() == 8);
    CHECK_THROWS_AS(cv_gaussian(X, Y, CvGrid{{1}, {0.0}, {0.1}, 10, 26, 0}), Error);
}

TEST_CASE("cv_gaussian: pure noise selects a heavily penalized model") {
    std::mt19937_64 rng(5);
    int hits = 0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
        Matrix X = oracle::normal_matrix(50, 5, rng);
        Matrix Y = oracle::normal_matrix(50, 2, rng);
        CvGrid grid;
        grid.Q_values = {1};
        grid.gamma_values = {0.0};
        grid.delta_count = 10;
        grid.K = 5;
        grid.seed = static_cast<std::uint64_t>(t);
        const CvResult res = cv_gaussian(X, Y, grid);
        // Top three of ten path values.
        if (res.best.delta >= res.delta_values[2]) ++hits;
    }
    MESSAGE("null-side selections: " << hits << "/" << trials);
    CHECK(hits >= 40);
}

TEST_CASE("cv_gaussian selects three clusters on the simulation design") {
    SimDesign design = SimDesign::desk(ResponseKind::gaussian);
    design.n_test = 0;
    int three = 0;
    for (int i = 0; i < 10; ++i) {
        const SimData data = gen_gaussian(design, 500 + static_cast<std::uint64_t>(i));
        CvGrid grid;
        grid.Q_values = {2, 3, 4};
        grid.gamma_values = {0.5, 2.0};
        grid.delta_count = 10;
        grid.K = 5;
        grid.seed = static_cast<std::uint64_t>(i);
        CvSettings s;
        s.gaussian.kmeans.seed = static_cast<std::uint64_t>(i);
        if (cv_gaussian(data.X, data.Y, grid, s).best.Q == 3) ++three;
    }
    MESSAGE("Q = 3 selected " << three << "/10");
    CHECK(three >= 6);
}

TEST_CASE("cv_binomial: Q = r and gamma = 0 cells agree") {
    std::mt19937_64 rng(6);
    Matrix X = oracle::normal_matrix(80, 3, rng);
    Matrix theta = oracle::normal_matrix(3, 3, rng);
    Matrix Y = bernoulli(X * theta, rng);
    CvGrid grid;
    grid.Q_values = {1, 3};
    grid.gamma_values = {0.0, 10.0};
    grid.delta_values = {5.0, 1.0};
    grid.K = 4;
    CvSettings s;
    s.binomial.solver.tol = 1e-12;
    s.binomial.solver.irls_tol = 1e-10;
    const CvResult res = cv_binomial(X, Y, grid, s);
    CHECK(res.criterion_kind == CriterionKind::loglik_max);
    for (double d : {5.0, 1.0}) {
        CHECK(cell_for(res, 3, 10.0, d).criterion ==
              doctest::Approx(cell_for(res, 1, 0.0, d).criterion).epsilon(1e-6));
        CHECK(cell_for(res, 3, 0.0, d).criterion ==
              doctest::Approx(cell_for(res, 1, 0.0, d).criterion).epsilon(1e-6));
    }
    for (const CvCell& c : res.table) CHECK(c.criterion < 0);
}

TEST_CASE("known partition fixes Q") {
    std::mt19937_64 rng(7);
    Matrix X = oracle::normal_matrix(30, 3, rng);
    Matrix Y = X * oracle::normal_matrix(3, 4, rng) + oracle::normal_matrix(30, 4, rng);
    CvGrid grid;
    grid.gamma_values = {0.5};
    grid.delta_values = {0.2, 0.1};
    grid.K = 3;
    CvSettings s;
    s.known = ClusterPartition({0, 0, 1, 1}, 2);
    const CvResult res = cv_gaussian(X, Y, grid, s);
    CHECK(res.table.size() == 2);
    CHECK(res.best.Q == 2);
}

TEST_CASE("separate elastic-net CV") {
    std::mt19937_64 rng(8);
    Matrix X = oracle::normal_matrix(60, 4, rng);
    Matrix B = Matrix::Zero(4, 2);
    B(0, 0) = 2;
    Matrix Y = X * B + oracle::normal_matrix(60, 2, rng);
    CvGrid grid;
    grid.gamma_values = {0.0, 1.0};
    grid.delta_count = 10;
    grid.K = 5;
    const SenSelection sel = cv_sen_gaussian(X, Y, grid);
    REQUIRE(sel.gamma.size() == 2);
    // Per-response choice is the best column of its criterion row.
    for (Index k = 0; k < 2; ++k) {
        const Index col = static_cast<Index>(std::find(sel.cells.begin(), sel.cells.end(),
                                                       std::make_pair(sel.gamma[k], sel.delta[k])) -
                                             sel.cells.begin());
        CHECK(sel.criterion(k, col) == sel.criterion.row(k).minCoeff());
    }
    // The pure-noise response is pushed toward the null end.
    CHECK(sel.delta[1] >= sel.delta[0]);

    const auto data = standardize(X, Y, ResponseKind::gaussian);
    const Matrix fit = sen_fit_gaussian(data, {0.0, 0.0}, {0.1, 0.1});
    for (Index k = 0; k < 2; ++k) {
        const Vector ref = oracle::elastic_net(data.X.values(), data.Y.values().col(k), 0.05, 0.0);
        CHECK((fit.col(k) - ref).cwiseAbs().maxCoeff() <= 1e-6);
    }

    Matrix Yb = bernoulli(X * B, rng);
    const SenSelection bsel = cv_sen_binomial(X, Yb, grid);
    CHECK(bsel.gamma.size() == 2);
    for (Index k = 0; k < 2; ++k) CHECK(bsel.criterion.row(k).maxCoeff() < 0);
    const auto bdata = standardize(X, Yb, ResponseKind::binomial);
    const Matrix T = sen_fit_binomial(bdata, bsel.gamma, bsel.delta);
    CHECK(T.rows() == 5);
}

TEST_CASE("auto gamma grid") {
    CHECK(auto_gamma_grid(ResponseKind::gaussian, 100) == std::vector<double>{0, 0.25, 0.5, 1, 2});
    CHECK(auto_gamma_grid(ResponseKind::binomial, 100) == std::vector<double>{0, 5, 25, 100});
}
