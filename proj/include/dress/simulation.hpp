#pragma once

#include "dress/estimators.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <atomic>
#include <mutex>
#include <thread>

namespace dress {

/// Configuration of the synthetic regression experiment:
///   x ~ N_d(0, I), y = 1^T x + eps ||x||^2 / d + z, z ~ N(0, sigma^2).
struct RegressionConfig {
    int d = 2;
    int n = 500;
    int nprime = 5000;
    double sigma = 0.2;
    double eps = 0.0;
    RatioConfig ratio_spec = ParametricRatioConfig{RatioModel::poly(2, 1), MomentFunction::qin(), {}};
    int reps = 200;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (d < 1 || n < 1 || nprime < 1 || reps < 1)
            throw ContractViolation("d, n, nprime, reps must be >= 1");
        if (sigma <= 0.0) throw ContractViolation("sigma must be positive");
        if (eps < 0.0) throw ContractViolation("eps must be nonnegative");
    }
};

struct RegressionData {
    Dataset labeled;
    std::vector<Vector> unlabeled_x;
};

/// Deterministic given (config.seed, rep_index).
inline RegressionData gen_regression(const RegressionConfig& cfg, int rep_index) {
    cfg.validate();
    Rng rng(cfg.seed, static_cast<std::uint64_t>(rep_index));
    RegressionData data;
    data.labeled.samples.reserve(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        Vector x = rng.normal_vector(cfg.d);
        const double y = x.sum() + cfg.eps * x.squaredNorm() / cfg.d + cfg.sigma * rng.normal();
        data.labeled.samples.push_back({std::move(x), y});
    }
    data.unlabeled_x.reserve(cfg.nprime);
    for (int j = 0; j < cfg.nprime; ++j)
        data.unlabeled_x.push_back(rng.normal_vector(cfg.d));
    return data;
}

/// e(eps) = min_alpha E[|f_eps(x) - alpha^T x|^2] = eps^2 (d+2)/d.
/// The minimizer is alpha* = 1 (odd Gaussian moments vanish) and
/// E||x||^4 = d^2 + 2d under N(0, I_d).
inline double model_error(double eps, int d) {
    if (d < 1) throw ContractViolation("d must be >= 1");
    return eps * eps * (d + 2.0) / d;
}

/// Normalized misspecification delta = sqrt(e(eps) n / (sigma^2 d)).
inline double misspec_delta(double eps, int n, double sigma, int d) {
    if (sigma <= 0.0) throw ContractViolation("sigma must be positive");
    return std::sqrt(model_error(eps, d) * n / (sigma * sigma * d));
}

/// Inverse of misspec_delta in eps.
inline double eps_for_delta(double delta, int n, double sigma, int d) {
    return delta * sigma * d / std::sqrt((d + 2.0) * n);
}

/// Analytic test error E[(alpha^T x - f_eps(x))^2] over x ~ N(0, I_d):
/// ||1 - alpha||^2 + eps^2 (d+2)/d.
inline double test_mse(const Vector& alpha, double eps, int d) {
    if (alpha.size() != d) throw ContractViolation("alpha dimension mismatch");
    return (Vector::Ones(d) - alpha).squaredNorm() + model_error(eps, d);
}

struct TTestResult {
    double t = 0.0;
    double p_one_tailed = 0.0;  // upper tail: evidence that the mean is > 0
};

/// One-sample t test of the differences against zero, upper one-tailed.
inline TTestResult paired_t_test(const std::vector<double>& differences) {
    const int m = static_cast<int>(differences.size());
    if (m < 2) throw ContractViolation("need at least two differences");
    double mean = 0.0;
    for (double v : differences) mean += v;
    mean /= m;
    double ss = 0.0;
    for (double v : differences) ss += (v - mean) * (v - mean);
    const double var = ss / (m - 1);
    if (var <= 0.0) throw DegenerateTest("zero variance in paired differences");
    TTestResult res;
    res.t = mean / std::sqrt(var / m);
    boost::math::students_t dist(m - 1);
    res.p_one_tailed = boost::math::cdf(boost::math::complement(dist, res.t));
    return res;
}

struct ImprovementSummary {
    double delta = 0.0;
    double mean_improvement = 0.0;  // n * (testMSE(naive) - testMSE(dress))
    double std_error = 0.0;
    double p_value = 0.0;
    int reps_used = 0;
    int reps_failed = 0;
};

namespace detail {

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int nworkers = std::min(threads, count);
    pool.reserve(nworkers);
    for (int w = 0; w < nworkers; ++w) {
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace detail

/// Run the regression improvement experiment: per replication, fit the
/// naive LMS estimator and DRESS on the same data and compare analytic test
/// errors. Deterministic under (seed, config); replications run in parallel
/// with per-replication seeds and an order-insensitive reduction.
inline ImprovementSummary run_improvement_experiment(const RegressionConfig& cfg) {
    cfg.validate();
    std::vector<double> improvements(cfg.reps,
                                     std::numeric_limits<double>::quiet_NaN());
    std::atomic<int> failures{0};

    detail::parallel_for(cfg.reps, cfg.threads, [&](int rep) {
        try {
            const RegressionData data = gen_regression(cfg, rep);
            const ScoreModel model = ScoreModel::linear_gaussian(cfg.d, cfg.sigma);
            const FitResult naive = mle(model, data.labeled);
            const FitResult ssl = dress(model, data.labeled, data.unlabeled_x, cfg.ratio_spec);
            improvements[rep] = cfg.n * (test_mse(naive.alpha_hat, cfg.eps, cfg.d) -
                                         test_mse(ssl.alpha_hat, cfg.eps, cfg.d));
        } catch (const std::exception&) {
            failures.fetch_add(1);
        }
    });

    std::vector<double> ok;
    ok.reserve(cfg.reps);
    for (double v : improvements)
        if (!std::isnan(v)) ok.push_back(v);

    if (failures.load() > 0.05 * cfg.reps) {
        std::ostringstream msg;
        msg << failures.load() << " of " << cfg.reps << " replications failed";
        throw ExperimentUnstable(msg.str());
    }

    ImprovementSummary s;
    s.delta = misspec_delta(cfg.eps, cfg.n, cfg.sigma, cfg.d);
    s.reps_used = static_cast<int>(ok.size());
    s.reps_failed = failures.load();
    double mean = 0.0;
    for (double v : ok) mean += v;
    mean /= ok.size();
    double ss = 0.0;
    for (double v : ok) ss += (v - mean) * (v - mean);
    s.mean_improvement = mean;
    s.std_error = std::sqrt(ss / (ok.size() - 1) / ok.size());
    const TTestResult t = paired_t_test(ok);
    s.p_value = t.p_one_tailed;
    return s;
}

}  // namespace dress
