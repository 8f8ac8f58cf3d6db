#include "dress/simulation.hpp"

#include <doctest.h>

using namespace dress;

TEST_CASE("regression generator determinism") {
    RegressionConfig cfg;
    cfg.d = 3;
    cfg.n = 20;
    cfg.nprime = 30;
    cfg.eps = 0.5;
    cfg.seed = 99;
    const auto a = gen_regression(cfg, 4);
    const auto b = gen_regression(cfg, 4);
    REQUIRE(a.labeled.size() == 20);
    REQUIRE(a.unlabeled_x.size() == 30);
    for (int i = 0; i < 20; ++i) {
        CHECK(a.labeled.samples[i].x == b.labeled.samples[i].x);
        CHECK(a.labeled.samples[i].y == b.labeled.samples[i].y);
    }
    for (int j = 0; j < 30; ++j) CHECK(a.unlabeled_x[j] == b.unlabeled_x[j]);

    const auto c = gen_regression(cfg, 5);
    CHECK(a.labeled.samples[0].y != c.labeled.samples[0].y);
}

TEST_CASE("regression generator noiseless limit") {
    RegressionConfig cfg;
    cfg.d = 2;
    cfg.n = 100;
    cfg.nprime = 1;
    cfg.eps = 0.0;
    cfg.sigma = 1e-12;
    const auto data = gen_regression(cfg, 0);
    for (const auto& s : data.labeled.samples)
        CHECK(std::abs(s.y - s.x.sum()) < 1e-9);
}

TEST_CASE("regression generator mean response at eps = 1") {
    RegressionConfig cfg;
    cfg.d = 2;
    cfg.n = 100000;
    cfg.nprime = 1;
    cfg.eps = 1.0;
    cfg.sigma = 1.0;
    const auto data = gen_regression(cfg, 0);
    double mean = 0.0;
    for (const auto& s : data.labeled.samples) mean += s.y;
    mean /= cfg.n;
    // E[y] = E[||x||^2]/d = 1; sd(y) = sqrt(2 + 2 + 1) per sample roughly
    const double se = 3.0 * std::sqrt(5.0 / cfg.n);
    CHECK(std::abs(mean - 1.0) <= se);
}

TEST_CASE("model_error closed form") {
    CHECK(model_error(0.0, 4) == doctest::Approx(0.0));
    CHECK(model_error(0.1, 2) == doctest::Approx(0.02));
    CHECK(model_error(0.2, 2) > model_error(0.1, 2));
}

TEST_CASE("model_error Monte Carlo oracle") {
    // minimize the empirical squared error over alpha on a large sample and
    // compare with eps^2 (d+2)/d
    const double eps = 0.3;
    const int d = 2, m = 1000000;
    Rng rng(123);
    Matrix XtX = Matrix::Zero(d, d);
    Vector Xtf = Vector::Zero(d);
    double ff = 0.0;
    for (int i = 0; i < m; ++i) {
        const Vector x = rng.normal_vector(d);
        const double f = x.sum() + eps * x.squaredNorm() / d;
        XtX += x * x.transpose();
        Xtf += x * f;
        ff += f * f;
    }
    const Vector alpha = XtX.ldlt().solve(Xtf);
    const double min_err = (ff - Xtf.dot(alpha)) / m;
    // Monte Carlo standard error of the minimized empirical error
    CHECK(std::abs(min_err - model_error(eps, d)) <= 3.0 * 1.0 / std::sqrt(double(m)));
}

TEST_CASE("delta formula") {
    CHECK(misspec_delta(0.0, 500, 0.2, 2) == doctest::Approx(0.0));
    CHECK(misspec_delta(0.05, 500, 0.2, 2) == doctest::Approx(std::sqrt(31.25)));
    // linear in eps
    CHECK(misspec_delta(0.2, 500, 0.2, 2) ==
          doctest::Approx(2.0 * misspec_delta(0.1, 500, 0.2, 2)));
    // inverse round-trips
    const double eps = eps_for_delta(5.0, 500, 0.2, 2);
    CHECK(misspec_delta(eps, 500, 0.2, 2) == doctest::Approx(5.0));
}

TEST_CASE("test_mse closed form") {
    CHECK(test_mse(Vector::Ones(2), 0.0, 2) == doctest::Approx(0.0));
    CHECK(test_mse(Vector::Zero(3), 0.0, 3) == doctest::Approx(3.0));
    CHECK(test_mse(Vector::Ones(2), 0.1, 2) == doctest::Approx(0.02));
}

TEST_CASE("test_mse agrees with empirical test error") {
    Rng rng(321);
    for (int t = 0; t < 3; ++t) {
        const int d = 2;
        const Vector alpha = Vector::Ones(d) + 0.2 * rng.normal_vector(d);
        const double eps = 0.4 * rng.uniform();
        const int m = 1000000;
        Rng mc(322, t);
        double acc = 0.0, acc2 = 0.0;
        for (int i = 0; i < m; ++i) {
            const Vector x = mc.normal_vector(d);
            const double f = x.sum() + eps * x.squaredNorm() / d;
            const double e = alpha.dot(x) - f;
            acc += e * e;
            acc2 += e * e * e * e;
        }
        const double emp = acc / m;
        const double se = std::sqrt((acc2 / m - emp * emp) / m);
        CHECK(std::abs(emp - test_mse(alpha, eps, d)) <= 3.0 * se);
    }
}

TEST_CASE("paired t test examples") {
    const auto symmetric = paired_t_test({1.0, -1.0});
    CHECK(symmetric.t == doctest::Approx(0.0));
    CHECK(symmetric.p_one_tailed == doctest::Approx(0.5));

    CHECK_THROWS_AS(paired_t_test({1.0, 1.0, 1.0}), DegenerateTest);
    CHECK_THROWS_AS(paired_t_test({1.0}), ContractViolation);

    const auto r = paired_t_test({1.0, 2.0, 3.0});
    CHECK(r.t == doctest::Approx(2.0 * std::sqrt(3.0)));
    CHECK(r.p_one_tailed == doctest::Approx(0.0371).epsilon(0.01));
}

TEST_CASE("p-value antisymmetry") {
    Rng rng(8);
    std::vector<double> diffs, neg;
    for (int i = 0; i < 25; ++i) {
        const double v = rng.normal() + 0.2;
        diffs.push_back(v);
        neg.push_back(-v);
    }
    const double sum =
        paired_t_test(diffs).p_one_tailed + paired_t_test(neg).p_one_tailed;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("improvement experiment determinism") {
    RegressionConfig cfg;
    cfg.d = 2;
    cfg.n = 100;
    cfg.nprime = 400;
    cfg.eps = 0.1;
    cfg.reps = 20;
    cfg.seed = 5;
    cfg.threads = 4;
    const auto a = run_improvement_experiment(cfg);
    const auto b = run_improvement_experiment(cfg);
    CHECK(a.mean_improvement == b.mean_improvement);
    CHECK(a.std_error == b.std_error);
    CHECK(a.p_value == b.p_value);
    CHECK(a.reps_used == 20);
}
