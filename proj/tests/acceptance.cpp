// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criterion 7 is skipped with a notice when the Spambase CSV is not
// available (set DRESS_SPAMBASE or place spambase.data in the working
// directory).

#include "dress/asymptotics.hpp"
#include "dress/data.hpp"
#include "dress/estimators.hpp"
#include "dress/simulation.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

using namespace dress;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, const char* name, bool pass, const std::string& note = "") {
    std::printf("[%s] criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", criterion, name,
                note.empty() ? "" : " -- ", note.c_str());
    if (!pass) ++failures;
}

void report_skip(int criterion, const char* name, const std::string& why) {
    std::printf("[SKIP] criterion %d: %s -- %s\n", criterion, name, why.c_str());
}

int hardware_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

std::vector<Vector> gaussian_cloud(int n, int d, Rng& rng) {
    std::vector<Vector> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(rng.normal_vector(d));
    return out;
}

Dataset regression_dataset(int n, int d, double sigma, double eps, Rng& rng) {
    Dataset ds;
    for (int i = 0; i < n; ++i) {
        Vector x = rng.normal_vector(d);
        const double y = x.sum() + eps * x.squaredNorm() / d + sigma * rng.normal();
        ds.samples.push_back({std::move(x), y});
    }
    return ds;
}

// ---------------------------------------------------------------------------

void criterion1_residuals() {
    bool ok = true;
    std::string note;
    Rng rng(1001);
    for (int t = 0; t < 100 && ok; ++t) {
        const int d = 1 + static_cast<int>(rng.below(3));
        const int n = 60 + static_cast<int>(rng.below(100));
        const int np = 80 + static_cast<int>(rng.below(200));
        const double eps = 0.5 * rng.uniform();
        const auto model = ScoreModel::linear_gaussian(d, 0.3);
        const Dataset labeled = regression_dataset(n, d, 0.3, eps, rng);
        const auto unlabeled = gaussian_cloud(np, d, rng);
        std::vector<Vector> labeled_x;
        for (const auto& s : labeled.samples) labeled_x.push_back(s.x);

        Vector w(n);
        for (int i = 0; i < n; ++i) w[i] = 0.5 + rng.uniform();

        const auto f1 = mle(model, labeled);
        const auto f2 = weighted_mle(model, labeled, w);
        ok = ok && f1.final_residual <= 1e-8 && f2.final_residual <= 1e-8;

        RatioModel rm = RatioModel::poly(d, 1);
        const auto mf = t % 2 == 0 ? MomentFunction::naive() : MomentFunction::qin();
        rm.theta = solve_ratio_moment(labeled_x, unlabeled, rm, mf);
        const double mres =
            moment_residual(labeled_x, unlabeled, rm, mf).lpNorm<Eigen::Infinity>();
        ok = ok && mres <= 1e-8;

        ParametricRatioConfig pc;
        pc.model = RatioModel::poly(d, 1);
        pc.moment = mf;
        const auto f3 = dress::dress(model, labeled, unlabeled, pc);
        RatioModel rm2 = pc.model;
        rm2.theta = *f3.theta_hat;
        const double r_ratio =
            moment_residual(labeled_x, unlabeled, rm2, mf).lpNorm<Eigen::Infinity>();
        const double r_score = detail::weighted_score(model, labeled, f3.weights_used,
                                                      f3.alpha_hat)
                                   .lpNorm<Eigen::Infinity>();
        ok = ok && r_ratio <= 1e-8 && r_score <= 1e-8;
        if (!ok) note = "instance " + std::to_string(t);
    }
    report(1, "estimating-equation residuals <= 1e-8 on 100 instances", ok, note);
}

void criterion2_identities() {
    bool ok = true;
    Rng rng(2002);

    RatioModel rm = RatioModel::poly(3, 2);
    for (int t = 0; t < 10; ++t)
        ok = ok && eval_ratio(rm, rng.normal_vector(3)) == 1.0;

    const auto model = ScoreModel::linear_gaussian(2, 0.3);
    const Dataset ds = regression_dataset(80, 2, 0.3, 0.2, rng);
    ok = ok && (weighted_mle(model, ds, Vector::Ones(80)).alpha_hat -
                mle(model, ds).alpha_hat)
                       .lpNorm<Eigen::Infinity>() <= 1e-10;

    std::vector<Vector> labeled_x;
    for (const auto& s : ds.samples) labeled_x.push_back(s.x);
    ParametricRatioConfig pc;
    pc.model = RatioModel::poly(2, 1);
    const auto fit = dress::dress(model, ds, labeled_x, pc);
    ok = ok &&
         (fit.alpha_hat - mle(model, ds).alpha_hat).lpNorm<Eigen::Infinity>() <= 1e-10;

    RatioModel rq = RatioModel::poly(2, 1);
    for (int t = 0; t < 10; ++t) {
        const Vector x = rng.normal_vector(2);
        const int n = 50 + static_cast<int>(rng.below(100));
        const int np = 50 + static_cast<int>(rng.below(400));
        const Vector eta = eval_moment(MomentFunction::qin(), rq, x, n, np);
        const Vector expect = rq.phi(x) * (static_cast<double>(n) / (n + np));
        ok = ok && (eta - expect).lpNorm<Eigen::Infinity>() == 0.0;
    }
    report(2, "identity suite (w(.;0)=1, unit weights, reduction, qin at theta*)", ok);
}

void criterion3_theorem1() {
    bool ok = true;
    std::string note;
    Rng rng(3003);
    for (int t = 0; t < 50 && ok; ++t) {
        const int d = 1 + static_cast<int>(rng.below(3));
        const int L = 1 + static_cast<int>(rng.below(2));  // r = L*d + 1 <= 7
        const int nsamp = 300;
        const int n = 100 + static_cast<int>(rng.below(100));
        const int np = n + 1 + static_cast<int>(rng.below(400));

        Matrix ub(nsamp, d), phi(nsamp, L * d + 1);
        Matrix mixing = Matrix::NullaryExpr(
            d, L * d + 1, [&rng](Eigen::Index, Eigen::Index) { return rng.normal(); });
        for (int i = 0; i < nsamp; ++i) {
            const Vector x = rng.normal_vector(d);
            const Vector p = poly_basis(x, L);
            phi.row(i) = p.transpose();
            Vector u = mixing * p;
            for (int k = 0; k < d; ++k) u[k] += std::sin(2.0 * x[k]) * x.squaredNorm();
            ub.row(i) = u.transpose();
        }

        const auto g_phi = diff_general(ub, phi, phi, n, np);
        const auto e_phi = diff_eta_phi(ub, phi, n, np);
        if ((g_phi.diff_matrix - e_phi.diff_matrix).lpNorm<Eigen::Infinity>() > 1e-10) {
            ok = false;
            note = "general(eta=phi) != eta-phi at instance " + std::to_string(t);
            break;
        }

        const auto pt = optimal_phitilde(ub, phi, n, np);
        if (pt.check > 1e-8) {
            ok = false;
            note = "B phitilde check failed at instance " + std::to_string(t);
            break;
        }
        const auto g_opt = diff_general(ub, phi, phi + pt.phitilde_samples, n, np);
        const auto o = diff_optimal(ub, phi, n, np);
        if ((g_opt.diff_matrix - o.diff_matrix).lpNorm<Eigen::Infinity>() >
            1e-8 * std::max(1.0, o.diff_matrix.norm())) {
            ok = false;
            note = "general(optimal eta) != diff_optimal at instance " + std::to_string(t);
            break;
        }

        Eigen::SelfAdjointEigenSolver<Matrix> es(o.diff_matrix - e_phi.diff_matrix);
        if (es.eigenvalues().minCoeff() < -1e-8) {
            ok = false;
            note = "PSD dominance violated at instance " + std::to_string(t);
            break;
        }

        const Matrix pythag = o.e_ubar_ubar - o.e_proj_proj - o.e_resid_resid;
        if (pythag.lpNorm<Eigen::Infinity>() >
            1e-10 * std::max(1.0, o.e_ubar_ubar.norm())) {
            ok = false;
            note = "Pythagoras identity violated at instance " + std::to_string(t);
            break;
        }
    }
    report(3, "variance-difference internal consistency on 50 instances", ok, note);
}

void criterion4_formula_vs_monte_carlo() {
    const int d = 2, n = 500, np = 5000, reps = 2000;
    const double sigma = 0.2;
    const double eps = eps_for_delta(5.0, n, sigma, d);
    const int threads = hardware_threads();

    RegressionConfig cfg;
    cfg.d = d;
    cfg.n = n;
    cfg.nprime = np;
    cfg.sigma = sigma;
    cfg.eps = eps;
    cfg.reps = reps;
    cfg.seed = 40004;
    cfg.threads = threads;
    ParametricRatioConfig pc;
    pc.model = RatioModel::poly(d, 1);
    pc.moment = MomentFunction::naive();  // eta = phi
    cfg.ratio_spec = pc;

    std::vector<Vector> naive_a(reps), dress_a(reps);
    std::vector<char> ok_rep(reps, 0);
    detail::parallel_for(reps, threads, [&](int r) {
        try {
            const RegressionData data = gen_regression(cfg, r);
            const auto model = ScoreModel::linear_gaussian(d, sigma);
            naive_a[r] = mle(model, data.labeled).alpha_hat;
            dress_a[r] = dress::dress(model, data.labeled, data.unlabeled_x, cfg.ratio_spec).alpha_hat;
            ok_rep[r] = 1;
        } catch (const std::exception&) {
        }
    });
    std::vector<Vector> na, da;
    for (int r = 0; r < reps; ++r)
        if (ok_rep[r]) {
            na.push_back(naive_a[r]);
            da.push_back(dress_a[r]);
        }

    // formula value on a large evaluation sample
    const int n_eval = 200000;
    Rng rng(40104);
    Matrix ub(n_eval, d), phi(n_eval, d + 1);
    std::vector<Vector> eval_x;
    eval_x.reserve(n_eval);
    for (int i = 0; i < n_eval; ++i) {
        Vector x = rng.normal_vector(d);
        ub.row(i) = ((eps * x.squaredNorm() / d) * x).transpose();
        phi.row(i) = poly_basis(x, 1).transpose();
        eval_x.push_back(std::move(x));
    }
    const auto formula = diff_eta_phi(ub, phi, n, np);

    const auto model = ScoreModel::linear_gaussian(d, sigma);
    const Matrix mean_grad = mean_score_jacobian(model, eval_x, Vector::Ones(d));
    const Matrix empirical = empirical_sandwich(mean_grad, na, n) -
                             empirical_sandwich(mean_grad, da, n);
    const double rel =
        (empirical - formula.diff_matrix).norm() / formula.diff_matrix.norm();
    std::ostringstream note;
    note << "relative Frobenius error " << rel << " (tolerance 0.25, " << na.size()
           << " reps)";
    report(4, "sandwich-variance difference matches the eta=phi formula", rel <= 0.25,
           note.str());
}

void criterion5_qualitative() {
    const int d = 2, n = 500;
    const double sigma = 0.2;
    const double eps5 = eps_for_delta(5.0, n, sigma, d);
    const int threads = hardware_threads();

    auto run = [&](double eps, int nprime, std::uint64_t seed) {
        RegressionConfig cfg;
        cfg.d = d;
        cfg.n = n;
        cfg.nprime = nprime;
        cfg.sigma = sigma;
        cfg.eps = eps;
        cfg.reps = 200;
        cfg.seed = seed;
        cfg.threads = threads;
        ParametricRatioConfig pc;
        pc.model = RatioModel::poly(d, 1);
        pc.moment = MomentFunction::qin();
        cfg.ratio_spec = pc;
        return run_improvement_experiment(cfg);
    };

    const auto at5 = run(eps5, 5000, 50005);
    const bool improves = at5.mean_improvement > 0.0 && at5.p_value < 0.05;

    const auto at0 = run(0.0, 5000, 50006);
    const bool specified_ok = at0.mean_improvement <= 0.0 ||
                              std::abs(at0.mean_improvement) < 2.0 * at0.std_error;

    const auto np100 = run(eps5, 100, 50007);
    const auto np1000 = run(eps5, 1000, 50007);
    const bool ordered = np100.mean_improvement <= np1000.mean_improvement &&
                         np1000.mean_improvement <= at5.mean_improvement;

    std::ostringstream note;
    note << "delta5: mean=" << at5.mean_improvement << " p=" << at5.p_value
           << "; delta0: mean=" << at0.mean_improvement << " se=" << at0.std_error
           << "; ordering " << np100.mean_improvement << " <= " << np1000.mean_improvement
           << " <= " << at5.mean_improvement;
    report(5, "qualitative regression reproduction (sign, significance, ordering)",
           improves && specified_ok && ordered, note.str());
}

void criterion6_kulsif() {
    bool ok = true;
    std::string note;

    const std::vector<Vector> pt = {Vector::Zero(1)};
    for (double lambda : {1.0, 0.1, 5.0}) {
        const auto fit = kulsif_fit(pt, pt, 1.0, lambda);
        if (std::abs(eval_kernel_ratio(fit, Vector::Zero(1)) - 1.0 / (1.0 + lambda)) >
            1e-10) {
            ok = false;
            note = "single-point oracle failed";
        }
    }

    Rng rng(6006);
    const auto lab = gaussian_cloud(500, 2, rng);
    const auto unl = gaussian_cloud(500, 2, rng);
    std::vector<Vector> pooled = lab;
    pooled.insert(pooled.end(), unl.begin(), unl.end());
    const auto fit = kulsif_fit(lab, unl, median_bandwidth(pooled), 1e-2);
    double mean_abs = 0.0;
    for (const auto& x : lab) mean_abs += std::abs(eval_kernel_ratio(fit, x) - 1.0);
    mean_abs /= lab.size();
    if (mean_abs >= 0.2) {
        ok = false;
        note = "mean |w-1| = " + std::to_string(mean_abs);
    }
    report(6, "KuLSIF sanity (hand oracle exact, w near 1 under p=q)", ok, note);
}

void criterion7_spambase() {
    std::string path;
    if (const char* env = std::getenv("DRESS_SPAMBASE")) path = env;
    for (const char* cand : {"spambase.data", "data/spambase.data", "spambase.csv"}) {
        if (!path.empty()) break;
        if (fs::exists(cand)) path = cand;
    }
    if (path.empty() || !fs::exists(path)) {
        report_skip(7, "Spambase soft reproduction",
                    "data file not found; set DRESS_SPAMBASE or place spambase.data "
                    "in the working directory");
        return;
    }

    const auto ds = load_csv(path, -1, "1");
    const int splits = 50, n = 800, np = 2000, D = 20;
    const int threads = hardware_threads();
    std::vector<double> dress_err(splits), mle_err(splits);
    std::vector<char> ok_split(splits, 0);
    detail::parallel_for(splits, threads, [&](int s) {
        try {
            const auto split = split_ssl(ds, n, np, D, mix_seed(70007, s));
            const auto model = ScoreModel::logistic(D);
            const auto naive = mle(model, split.labeled);
            KernelRatioConfig kc;
            kc.bandwidth_seed = mix_seed(70007, s);
            const auto ssl = dress::dress(model, split.labeled, split.unlabeled_x, kc);
            auto err = [&](const Vector& alpha) {
                int wrong = 0;
                for (const auto& sm : split.test.samples) {
                    Vector xt(D + 1);
                    xt[0] = 1.0;
                    xt.tail(D) = sm.x;
                    if ((alpha.dot(xt) > 0.0 ? 1.0 : 0.0) != sm.y) ++wrong;
                }
                return 100.0 * wrong / split.test.size();
            };
            mle_err[s] = err(naive.alpha_hat);
            dress_err[s] = err(ssl.alpha_hat);
            ok_split[s] = 1;
        } catch (const std::exception&) {
        }
    });

    std::vector<double> dv, mv, diffs;
    for (int s = 0; s < splits; ++s)
        if (ok_split[s]) {
            dv.push_back(dress_err[s]);
            mv.push_back(mle_err[s]);
            diffs.push_back(mle_err[s] - dress_err[s]);
        }
    double dmean = 0.0, mmean = 0.0;
    for (double v : dv) dmean += v;
    for (double v : mv) mmean += v;
    dmean /= dv.size();
    mmean /= mv.size();
    const double p = paired_t_test(diffs).p_one_tailed;

    const bool better = dmean < mmean && p < 0.01;
    const bool near_table = std::abs(dmean - 16.37) <= 2.5 && std::abs(mmean - 16.88) <= 2.5;
    std::ostringstream note;
    note << "DRESS " << dmean << "%, MLE " << mmean << "%, p=" << p << " ("
           << dv.size() << " splits)";
    report(7, "Spambase soft reproduction (n=800, n'=2000, D=20)", better && near_table,
           note.str());
}

void criterion8_determinism() {
#ifndef DRESS_CLI_PATH
    report_skip(8, "CLI determinism", "CLI path not configured");
#else
    const fs::path dir =
        fs::temp_directory_path() / ("dress_accept_" + std::to_string(std::rand()));
    fs::create_directories(dir);
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p);
        std::ostringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    const std::string flags =
        " simulate --d 2 --n 60 --nprime 150 --sigma 0.2 --delta-grid 0,5 "
        "--ratio poly:1 --eta qin --reps 8 --seed 11 --threads 3 --out ";
    const std::string o1 = (dir / "r1").string();
    const std::string o2 = (dir / "r2").string();
    const int c1 = std::system((std::string(DRESS_CLI_PATH) + flags + o1 + " >/dev/null").c_str());
    const int c2 = std::system((std::string(DRESS_CLI_PATH) + flags + o2 + " >/dev/null").c_str());
    const bool ok = c1 == 0 && c2 == 0 && slurp(o1 + ".csv") == slurp(o2 + ".csv") &&
                    slurp(o1 + ".json") == slurp(o2 + ".json") &&
                    !slurp(o1 + ".csv").empty();
    fs::remove_all(dir);
    report(8, "CLI outputs byte-identical across repeated invocations", ok);
#endif
}

}  // namespace

int main() {
    criterion1_residuals();
    criterion2_identities();
    criterion3_theorem1();
    criterion4_formula_vs_monte_carlo();
    criterion5_qualitative();
    criterion6_kulsif();
    criterion7_spambase();
    criterion8_determinism();
    if (failures == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d acceptance criteria failed\n", failures);
    return 1;
}
