// Command-line driver for the DRESS library: synthetic regression sweeps,
// the spam classification benchmark, and variance-improvement diagnostics.

#include "dress/asymptotics.hpp"
#include "dress/data.hpp"
#include "dress/estimators.hpp"
#include "dress/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

using json = nlohmann::json;
using namespace dress;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUnstable = 2;
constexpr int kExitRank = 3;
constexpr int kExitUsage = 64;
constexpr int kExitInput = 66;

std::string fmt_num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_manifest(const std::string& out_prefix, const std::string& command,
                    const json& config, std::uint64_t seed,
                    const std::vector<std::string>& outputs,
                    const std::string& started) {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    m["library_version"] = kVersion;
    m["started"] = started;
    m["finished"] = iso_now();
    m["outputs"] = outputs;
    std::ofstream f(out_prefix + ".manifest.json");
    f << m.dump(2) << "\n";
}

std::vector<double> parse_grid(const std::string& s) {
    std::vector<double> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

struct RatioFlag {
    bool parametric = true;
    int L = 1;
    double lambda = 1e-2;
};

RatioFlag parse_ratio(const std::string& s) {
    RatioFlag r;
    if (s.rfind("poly:", 0) == 0) {
        r.parametric = true;
        r.L = std::stoi(s.substr(5));
        if (r.L < 1) throw CLI::ValidationError("--ratio", "poly order must be >= 1");
    } else if (s == "kulsif") {
        r.parametric = false;
    } else {
        throw CLI::ValidationError("--ratio", "expected poly:L or kulsif");
    }
    return r;
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("DRESS_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    int d = 2, n = 500, nprime = 5000;
    double sigma = 0.2;
    std::string delta_grid, eps_grid;
    std::string ratio = "poly:1";
    std::string eta = "qin";
    double lambda = 1e-2;
    int reps = 200;
    std::uint64_t seed = 0;
    std::string out = "simulate";
    int threads = 0;
};

int run_simulate(const SimulateArgs& a) {
    const std::string started = iso_now();
    if (a.delta_grid.empty() == a.eps_grid.empty()) {
        std::cerr << "error: exactly one of --delta-grid / --eps-grid is required\n";
        return kExitUsage;
    }
    std::vector<double> eps_values;
    if (!a.eps_grid.empty()) {
        eps_values = parse_grid(a.eps_grid);
    } else {
        for (double delta : parse_grid(a.delta_grid))
            eps_values.push_back(eps_for_delta(delta, a.n, a.sigma, a.d));
    }
    const RatioFlag ratio = parse_ratio(a.ratio);
    const int threads = resolve_threads(a.threads);

    std::ostringstream csv;
    csv << "delta,eps,mean_improvement,std_error,p_value,reps_used,reps_failed,"
           "d,n,nprime,sigma,ratio,eta,seed\n";
    json rows = json::array();
    bool unstable = false;

    for (std::size_t gi = 0; gi < eps_values.size(); ++gi) {
        RegressionConfig cfg;
        cfg.d = a.d;
        cfg.n = a.n;
        cfg.nprime = a.nprime;
        cfg.sigma = a.sigma;
        cfg.eps = eps_values[gi];
        cfg.reps = a.reps;
        cfg.seed = mix_seed(a.seed, gi);
        cfg.threads = threads;
        if (ratio.parametric) {
            ParametricRatioConfig pc;
            pc.model = RatioModel::poly(a.d, ratio.L);
            pc.moment = a.eta == "naive" ? MomentFunction::naive() : MomentFunction::qin();
            cfg.ratio_spec = pc;
        } else {
            KernelRatioConfig kc;
            kc.lambda = ratio.lambda;
            kc.bandwidth_seed = cfg.seed;
            cfg.ratio_spec = kc;
        }

        try {
            const ImprovementSummary s = run_improvement_experiment(cfg);
            csv << fmt_num(s.delta) << ',' << fmt_num(cfg.eps) << ','
                << fmt_num(s.mean_improvement) << ',' << fmt_num(s.std_error) << ','
                << fmt_num(s.p_value) << ',' << s.reps_used << ',' << s.reps_failed << ','
                << a.d << ',' << a.n << ',' << a.nprime << ',' << fmt_num(a.sigma) << ','
                << a.ratio << ',' << a.eta << ',' << a.seed << "\n";
            json row;
            row["delta"] = s.delta;
            row["eps"] = cfg.eps;
            row["mean_improvement"] = s.mean_improvement;
            row["std_error"] = s.std_error;
            row["p_value"] = s.p_value;
            row["reps_used"] = s.reps_used;
            row["reps_failed"] = s.reps_failed;
            rows.push_back(row);
        } catch (const ExperimentUnstable& e) {
            std::cerr << "unstable experiment at eps=" << cfg.eps << ": " << e.what() << "\n";
            unstable = true;
        }
    }

    const std::string csv_path = a.out + ".csv";
    const std::string json_path = a.out + ".json";
    std::ofstream(csv_path) << csv.str();
    json summary;
    summary["rows"] = rows;
    summary["config"] = {{"d", a.d},        {"n", a.n},         {"nprime", a.nprime},
                         {"sigma", a.sigma}, {"ratio", a.ratio}, {"eta", a.eta},
                         {"reps", a.reps},   {"seed", a.seed}};
    std::ofstream(json_path) << summary.dump(2) << "\n";
    write_manifest(a.out, "simulate", summary["config"], a.seed, {csv_path, json_path}, started);
    std::cout << "wrote " << csv_path << " and " << json_path << "\n";
    return unstable ? kExitUnstable : kExitOk;
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

struct ClassifyArgs {
    std::string data;
    int n = 800, nprime = 2000, D = 20, splits = 50;
    double lambda = 1e-2;
    std::uint64_t seed = 0;
    std::string out = "classify";
    std::string positive_label = "1";
    int threads = 0;
};

double misclassification_pct(const ScoreModel& model, const Vector& alpha,
                             const Dataset& test) {
    int wrong = 0;
    for (const auto& s : test.samples) {
        Vector xt(model.param_dim());
        xt[0] = 1.0;
        xt.tail(model.covariate_dim()) = s.x;
        const int pred = alpha.dot(xt) > 0.0 ? 1 : 0;
        if (pred != static_cast<int>(s.y)) ++wrong;
    }
    return 100.0 * wrong / test.size();
}

int run_classify(const ClassifyArgs& a) {
    const std::string started = iso_now();
    TabularDataset ds;
    try {
        ds = load_csv(a.data, -1, a.positive_label);
    } catch (const IngestError& e) {
        std::cerr << "ingest error: " << e.what() << "\n";
        return kExitInput;
    }
    if (a.D > ds.features.cols()) {
        std::cerr << "error: --D " << a.D << " exceeds feature count " << ds.features.cols()
                  << "\n";
        return kExitUsage;
    }

    struct SplitResult {
        double dress_err = 0.0, mle_err = 0.0;
        bool ok = false;
    };
    std::vector<SplitResult> results(a.splits);
    const int threads = resolve_threads(a.threads);

    detail::parallel_for(a.splits, threads, [&](int s) {
        try {
            const SslSplit split = split_ssl(ds, a.n, a.nprime, a.D, mix_seed(a.seed, s));
            const ScoreModel model = ScoreModel::logistic(a.D);
            const FitResult naive = mle(model, split.labeled);
            KernelRatioConfig kc;
            kc.lambda = a.lambda;
            kc.bandwidth_seed = mix_seed(a.seed, s);
            const FitResult ssl = dress::dress(model, split.labeled, split.unlabeled_x, kc);
            results[s].mle_err = misclassification_pct(model, naive.alpha_hat, split.test);
            results[s].dress_err = misclassification_pct(model, ssl.alpha_hat, split.test);
            results[s].ok = true;
        } catch (const std::exception& e) {
            std::cerr << "split " << s << " failed: " << e.what() << "\n";
        }
    });

    std::vector<double> dress_errs, mle_errs, diffs;
    for (const auto& r : results) {
        if (!r.ok) continue;
        dress_errs.push_back(r.dress_err);
        mle_errs.push_back(r.mle_err);
        diffs.push_back(r.mle_err - r.dress_err);
    }
    if (diffs.size() < 2) {
        std::cerr << "error: fewer than two successful splits\n";
        return kExitUnstable;
    }

    auto mean_sd = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= v.size();
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair<double, double>(m, std::sqrt(ss / (v.size() - 1)));
    };
    const auto [dm, dsd] = mean_sd(dress_errs);
    const auto [mm, msd] = mean_sd(mle_errs);
    double p = 0.5;
    try {
        p = paired_t_test(diffs).p_one_tailed;  // small p: DRESS beats MLE
    } catch (const DegenerateTest&) {
    }

    std::ostringstream csv;
    csv << "split,dress_error_pct,mle_error_pct\n";
    for (std::size_t i = 0; i < results.size(); ++i)
        if (results[i].ok)
            csv << i << ',' << fmt_num(results[i].dress_err) << ','
                << fmt_num(results[i].mle_err) << "\n";
    const std::string csv_path = a.out + ".csv";
    const std::string json_path = a.out + ".json";
    std::ofstream(csv_path) << csv.str();

    json summary;
    summary["dress_mean_error_pct"] = dm;
    summary["dress_sd_error_pct"] = dsd;
    summary["mle_mean_error_pct"] = mm;
    summary["mle_sd_error_pct"] = msd;
    summary["p_value_one_tailed"] = p;
    summary["splits_used"] = diffs.size();
    summary["config"] = {{"data", a.data}, {"n", a.n},       {"nprime", a.nprime},
                         {"D", a.D},       {"splits", a.splits}, {"lambda", a.lambda},
                         {"seed", a.seed}};
    std::ofstream(json_path) << summary.dump(2) << "\n";
    write_manifest(a.out, "classify", summary["config"], a.seed, {csv_path, json_path}, started);

    std::printf("DRESS %.2f +- %.2f %%   MLE %.2f +- %.2f %%   p=%.4f  (%zu splits)\n", dm,
                dsd, mm, msd, p, diffs.size());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// diff
// ---------------------------------------------------------------------------

struct DiffArgs {
    int d = 2;
    double eps = 0.045;
    std::string basis = "poly:1";
    int n = 500, nprime = 5000;
    std::string mode = "eta-phi";
    int eval_samples = 100000;
    std::uint64_t seed = 0;
    bool validate = false;
    int reps = 500;
    double sigma = 0.2;
    std::string out = "diff";
    int threads = 0;
};

int run_diff(const DiffArgs& a) {
    const std::string started = iso_now();
    const RatioFlag basis = parse_ratio(a.basis);
    if (!basis.parametric) {
        std::cerr << "error: --basis must be poly:L\n";
        return kExitUsage;
    }

    // Evaluation sample from the known covariate law x ~ N(0, I_d).
    Rng rng(a.seed, 0xe7a1);
    const int r = basis.L * a.d + 1;
    Matrix ubar_s(a.eval_samples, a.d), phi_s(a.eval_samples, r);
    const Vector alpha_star = Vector::Ones(a.d);
    std::vector<Vector> eval_x;
    eval_x.reserve(a.eval_samples);
    const UbarSpec spec = UbarSpec::analytic(
        [&a](const Vector& x) { return x.sum() + a.eps * x.squaredNorm() / a.d; }, alpha_star);
    for (int i = 0; i < a.eval_samples; ++i) {
        Vector x = rng.normal_vector(a.d);
        ubar_s.row(i) = ubar(spec, x).transpose();
        phi_s.row(i) = poly_basis(x, basis.L).transpose();
        eval_x.push_back(std::move(x));
    }

    ImprovementReport rep;
    bool psd_dominance = false;
    try {
        if (a.mode == "eta-phi") {
            rep = diff_eta_phi(ubar_s, phi_s, a.n, a.nprime);
        } else if (a.mode == "optimal") {
            rep = diff_optimal(ubar_s, phi_s, a.n, a.nprime);
            const ImprovementReport base = diff_eta_phi(ubar_s, phi_s, a.n, a.nprime);
            Eigen::SelfAdjointEigenSolver<Matrix> es(rep.diff_matrix - base.diff_matrix);
            psd_dominance = es.eigenvalues().minCoeff() >= -1e-8;
        } else if (a.mode == "general") {
            // eta = phi + optimal phitilde
            const OptimalPhiTilde pt = optimal_phitilde(ubar_s, phi_s, a.n, a.nprime);
            rep = diff_general(ubar_s, phi_s, phi_s + pt.phitilde_samples, a.n, a.nprime);
        } else {
            std::cerr << "error: --mode must be eta-phi, optimal or general\n";
            return kExitUsage;
        }
    } catch (const RankDeficient& e) {
        std::cerr << "rank failure: " << e.what() << "\n";
        return kExitRank;
    } catch (const SingularSystem& e) {
        std::cerr << "singular system: " << e.what() << "\n";
        return kExitRank;
    }

    json out;
    out["mode"] = a.mode;
    out["diff_matrix"] = matrix_to_json(rep.diff_matrix);
    out["E_ubar_ubar"] = matrix_to_json(rep.e_ubar_ubar);
    out["E_proj_proj"] = matrix_to_json(rep.e_proj_proj);
    out["E_resid_resid"] = matrix_to_json(rep.e_resid_resid);
    out["B"] = matrix_to_json(rep.B);
    out["sample_size_used"] = rep.sample_size_used;
    if (a.mode == "optimal") out["psd_dominance_over_eta_phi"] = psd_dominance;

    if (a.validate) {
        // Monte Carlo check of the formula: sandwich variance of the naive
        // MLE minus sandwich variance of DRESS across replications.
        RegressionConfig cfg;
        cfg.d = a.d;
        cfg.n = a.n;
        cfg.nprime = a.nprime;
        cfg.sigma = a.sigma;
        cfg.eps = a.eps;
        cfg.reps = a.reps;
        cfg.seed = a.seed;
        cfg.threads = resolve_threads(a.threads);
        ParametricRatioConfig pc;
        pc.model = RatioModel::poly(a.d, basis.L);
        pc.moment = MomentFunction::qin();
        cfg.ratio_spec = pc;

        std::vector<Vector> naive_alphas(cfg.reps), dress_alphas(cfg.reps);
        std::vector<char> ok(cfg.reps, 0);
        detail::parallel_for(cfg.reps, cfg.threads, [&](int repi) {
            try {
                const RegressionData data = gen_regression(cfg, repi);
                const ScoreModel model = ScoreModel::linear_gaussian(cfg.d, cfg.sigma);
                naive_alphas[repi] = mle(model, data.labeled).alpha_hat;
                dress_alphas[repi] =
                    dress::dress(model, data.labeled, data.unlabeled_x, cfg.ratio_spec).alpha_hat;
                ok[repi] = 1;
            } catch (const std::exception&) {
            }
        });
        std::vector<Vector> na, da;
        for (int i = 0; i < cfg.reps; ++i)
            if (ok[i]) {
                na.push_back(naive_alphas[i]);
                da.push_back(dress_alphas[i]);
            }
        const ScoreModel model = ScoreModel::linear_gaussian(a.d, a.sigma);
        const Matrix mean_grad = mean_score_jacobian(model, eval_x, alpha_star);
        const Matrix sand_naive = empirical_sandwich(mean_grad, na, a.n);
        const Matrix sand_dress = empirical_sandwich(mean_grad, da, a.n);
        const Matrix empirical_diff = sand_naive - sand_dress;
        const double rel = (empirical_diff - rep.diff_matrix).norm() /
                           std::max(rep.diff_matrix.norm(), 1e-30);
        out["validate"] = {{"empirical_diff", matrix_to_json(empirical_diff)},
                           {"relative_frobenius_error", rel},
                           {"reps_used", na.size()}};
        std::printf("formula vs Monte Carlo: relative Frobenius error %.3f (%zu reps)\n", rel,
                    na.size());
    }

    const std::string json_path = a.out + ".json";
    std::ofstream(json_path) << out.dump(2) << "\n";
    json cfg_echo = {{"d", a.d},     {"eps", a.eps},       {"basis", a.basis},
                     {"n", a.n},     {"nprime", a.nprime}, {"mode", a.mode},
                     {"eval_samples", a.eval_samples}, {"seed", a.seed}};
    write_manifest(a.out, "diff", cfg_echo, a.seed, {json_path}, started);
    std::cout << "wrote " << json_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DRESS: semi-supervised estimation with density-ratio weights"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "regression improvement sweep");
    simulate->add_option("--d", sim.d, "covariate dimension");
    simulate->add_option("--n", sim.n, "labeled sample size");
    simulate->add_option("--nprime", sim.nprime, "unlabeled sample size");
    simulate->add_option("--sigma", sim.sigma, "noise standard deviation");
    simulate->add_option("--delta-grid", sim.delta_grid, "comma-separated delta targets");
    simulate->add_option("--eps-grid", sim.eps_grid, "comma-separated eps values");
    simulate->add_option("--ratio", sim.ratio, "poly:L or kulsif");
    simulate->add_option("--eta", sim.eta, "naive or qin")
        ->check(CLI::IsMember({"naive", "qin"}));
    simulate->add_option("--reps", sim.reps, "replications")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim.seed, "run seed");
    simulate->add_option("--out", sim.out, "output path prefix");
    simulate->add_option("--threads", sim.threads, "worker threads (0: auto)");

    ClassifyArgs cls;
    auto* classify = app.add_subcommand("classify", "spam classification benchmark");
    classify->add_option("--data", cls.data, "CSV file (57 features + label)")->required();
    classify->add_option("--n", cls.n, "labeled sample size");
    classify->add_option("--nprime", cls.nprime, "unlabeled sample size");
    classify->add_option("--D", cls.D, "feature-count prefix");
    classify->add_option("--splits", cls.splits, "number of random splits")
        ->check(CLI::PositiveNumber);
    classify->add_option("--lambda", cls.lambda, "KuLSIF ridge");
    classify->add_option("--positive-label", cls.positive_label, "label mapped to 1");
    classify->add_option("--seed", cls.seed, "run seed");
    classify->add_option("--out", cls.out, "output path prefix");
    classify->add_option("--threads", cls.threads, "worker threads (0: auto)");

    DiffArgs dif;
    auto* diffc = app.add_subcommand("diff", "variance-improvement report");
    diffc->add_option("--d", dif.d, "covariate dimension");
    diffc->add_option("--eps", dif.eps, "misspecification eps");
    diffc->add_option("--basis", dif.basis, "poly:L ratio basis");
    diffc->add_option("--n", dif.n, "labeled sample size");
    diffc->add_option("--nprime", dif.nprime, "unlabeled sample size");
    diffc->add_option("--mode", dif.mode, "eta-phi, optimal or general");
    diffc->add_option("--eval-samples", dif.eval_samples, "evaluation sample size")
        ->check(CLI::PositiveNumber);
    diffc->add_option("--sigma", dif.sigma, "noise sd (for --validate)");
    diffc->add_option("--seed", dif.seed, "run seed");
    diffc->add_flag("--validate", dif.validate, "Monte Carlo sandwich comparison");
    diffc->add_option("--reps", dif.reps, "replications for --validate");
    diffc->add_option("--out", dif.out, "output path prefix");
    diffc->add_option("--threads", dif.threads, "worker threads (0: auto)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (simulate->parsed()) return run_simulate(sim);
        if (classify->parsed()) return run_classify(cls);
        if (diffc->parsed()) return run_diff(dif);
    } catch (const ContractViolation& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IngestError& e) {
        std::cerr << "ingest error: " << e.what() << "\n";
        return kExitInput;
    } catch (const ExperimentUnstable& e) {
        std::cerr << "unstable experiment: " << e.what() << "\n";
        return kExitUnstable;
    } catch (const RankDeficient& e) {
        std::cerr << "rank failure: " << e.what() << "\n";
        return kExitRank;
    } catch (const SingularSystem& e) {
        std::cerr << "singular system: " << e.what() << "\n";
        return kExitRank;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitUsage;
}
