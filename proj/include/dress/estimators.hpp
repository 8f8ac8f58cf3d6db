#pragma once

#include "dress/density_ratio.hpp"
#include "dress/model.hpp"

#include <variant>

namespace dress {

struct FitResult {
    Vector alpha_hat;
    std::optional<Vector> theta_hat;
    Vector weights_used;
    int iterations = 0;
    double final_residual = 0.0;
};

struct ScoreSolverConfig {
    double tol = 1e-8;
    int max_iter = 100;
    int max_halvings = 20;
    double divergence_norm = 1e6;
};

namespace detail {

/// Max-norm of the weighted score equation (1/n) sum w_i u_i at alpha.
inline Vector weighted_score(const ScoreModel& model, const Dataset& labeled,
                             const Vector& weights, const Vector& alpha) {
    Vector g = Vector::Zero(model.param_dim());
    for (int i = 0; i < labeled.size(); ++i)
        g += weights[i] * model.score(labeled.samples[i].x, labeled.samples[i].y, alpha);
    return g / labeled.size();
}

inline FitResult weighted_linear_gaussian(const ScoreModel& model, const Dataset& labeled,
                                          const Vector& weights) {
    // Weighted least squares closed form: (X^T W X) alpha = X^T W y.
    const int n = labeled.size();
    const int d = model.param_dim();
    Matrix XtWX = Matrix::Zero(d, d);
    Vector XtWy = Vector::Zero(d);
    for (int i = 0; i < n; ++i) {
        const Vector& x = labeled.samples[i].x;
        XtWX += weights[i] * (x * x.transpose());
        XtWy += weights[i] * x * labeled.samples[i].y;
    }
    const double cond = condition_number(XtWX);
    if (!(cond < 1e12)) {
        std::ostringstream msg;
        msg << "normal equations singular (cond=" << cond << ")";
        throw SingularSystem(msg.str(), cond);
    }
    FitResult fit;
    fit.alpha_hat = XtWX.ldlt().solve(XtWy);
    fit.weights_used = weights;
    fit.iterations = 1;
    fit.final_residual =
        weighted_score(model, labeled, weights, fit.alpha_hat).lpNorm<Eigen::Infinity>();
    return fit;
}

inline FitResult weighted_logistic(const ScoreModel& model, const Dataset& labeled,
                                   const Vector& weights, const ScoreSolverConfig& cfg) {
    const int d = model.param_dim();
    Vector alpha = Vector::Zero(d);
    Vector g = weighted_score(model, labeled, weights, alpha);
    double g_norm = g.lpNorm<Eigen::Infinity>();

    FitResult fit;
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        if (g_norm <= cfg.tol) break;
        Matrix J = Matrix::Zero(d, d);
        for (int i = 0; i < labeled.size(); ++i)
            J += weights[i] *
                 model.score_jacobian(labeled.samples[i].x, labeled.samples[i].y, alpha);
        J /= labeled.size();

        Eigen::LDLT<Matrix> ldlt(-J);  // -J is PSD for logistic
        Vector step = ldlt.solve(g);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            const double cond = condition_number(J);
            throw SingularSystem("logistic Hessian singular", cond);
        }

        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h <= cfg.max_halvings; ++h, scale *= 0.5) {
            const Vector trial = alpha + scale * step;
            const Vector tg = weighted_score(model, labeled, weights, trial);
            const double tn = tg.lpNorm<Eigen::Infinity>();
            if (tn < g_norm) {
                alpha = trial;
                g = tg;
                g_norm = tn;
                accepted = true;
                break;
            }
        }
        if (!accepted)
            throw NonConvergence("logistic Newton stalled", g_norm);
        if (alpha.lpNorm<Eigen::Infinity>() > cfg.divergence_norm)
            throw Divergence("logistic fit diverged (separable data?)");
        fit.iterations = iter + 1;
    }
    if (g_norm > cfg.tol)
        throw NonConvergence("logistic Newton exceeded max iterations", g_norm);
    // Complete separation: every sample classified correctly with a large
    // margin means the likelihood has no maximizer and the root found is an
    // artifact of the tolerance.
    {
        bool separated = true;
        for (int i = 0; i < labeled.size(); ++i) {
            Vector xt(d);
            xt[0] = 1.0;
            xt.tail(d - 1) = labeled.samples[i].x;
            const double margin = (2.0 * labeled.samples[i].y - 1.0) * alpha.dot(xt);
            if (margin <= 0.0) {
                separated = false;
                break;
            }
        }
        if (separated)
            throw Divergence("logistic data is completely separated; MLE does not exist");
    }
    fit.alpha_hat = alpha;
    fit.weights_used = weights;
    fit.final_residual = g_norm;
    return fit;
}

}  // namespace detail

/// Weighted MLE: root of (1/n) sum w_i u(x_i,y_i;alpha) = 0.
inline FitResult weighted_mle(const ScoreModel& model, const Dataset& labeled,
                              const Vector& weights, const ScoreSolverConfig& cfg = {}) {
    const int n = labeled.size();
    if (n < model.param_dim())
        throw ContractViolation("fewer samples than parameters");
    if (weights.size() != n) throw ContractViolation("weights length mismatch");
    if ((weights.array() <= 0.0).any())
        throw ContractViolation("weights must be positive");
    if (model.kind() == ScoreModel::Kind::LinearGaussian)
        return detail::weighted_linear_gaussian(model, labeled, weights);
    return detail::weighted_logistic(model, labeled, weights, cfg);
}

/// Naive MLE: root of the unweighted score equation.
inline FitResult mle(const ScoreModel& model, const Dataset& labeled,
                     const ScoreSolverConfig& cfg = {}) {
    return weighted_mle(model, labeled, Vector::Ones(labeled.size()), cfg);
}

/// Ratio-estimation options for dress().
struct ParametricRatioConfig {
    RatioModel model;
    MomentFunction moment = MomentFunction::qin();
    MomentSolverConfig solver;
};

struct KernelRatioConfig {
    std::optional<double> bandwidth;  // median heuristic when unset
    double lambda = 1e-2;
    std::size_t center_cap = 2000;
    std::uint64_t bandwidth_seed = 0;
};

using RatioConfig = std::variant<ParametricRatioConfig, KernelRatioConfig>;

/// DRESS: density-ratio estimation based semi-supervised learning.
/// The joint system is block triangular, so the ratio parameter is fit
/// from covariates alone and then plugged into the weighted MLE.
inline FitResult dress(const ScoreModel& model, const Dataset& labeled,
                       const std::vector<Vector>& unlabeled_x,
                       const RatioConfig& ratio_cfg,
                       const ScoreSolverConfig& cfg = {}) {
    const int n = labeled.size();
    std::vector<Vector> labeled_x;
    labeled_x.reserve(n);
    for (const auto& s : labeled.samples) labeled_x.push_back(s.x);

    Vector weights(n);
    std::optional<Vector> theta_hat;

    if (std::holds_alternative<ParametricRatioConfig>(ratio_cfg)) {
        const auto& pc = std::get<ParametricRatioConfig>(ratio_cfg);
        RatioModel rm = pc.model;
        try {
            rm.theta = solve_ratio_moment(labeled_x, unlabeled_x, rm, pc.moment, pc.solver);
        } catch (const NonConvergence& e) {
            throw NonConvergence(std::string("[ratio stage] ") + e.what(), e.last_residual);
        } catch (const SingularSystem& e) {
            throw SingularSystem(std::string("[ratio stage] ") + e.what(), e.condition);
        }
        theta_hat = rm.theta;
        for (int i = 0; i < n; ++i) weights[i] = eval_ratio(rm, labeled_x[i]);
    } else {
        const auto& kc = std::get<KernelRatioConfig>(ratio_cfg);
        std::vector<Vector> pooled = labeled_x;
        pooled.insert(pooled.end(), unlabeled_x.begin(), unlabeled_x.end());
        const double bw = kc.bandwidth ? *kc.bandwidth
                                       : median_bandwidth(pooled, kc.bandwidth_seed);
        const KernelRatioFit fit =
            kulsif_fit(labeled_x, unlabeled_x, bw, kc.lambda, kc.center_cap);
        for (int i = 0; i < n; ++i) weights[i] = eval_kernel_ratio(fit, labeled_x[i]);
        // Renormalize to mean 1 over the labeled sample; the true weight is 1
        // under p = q and the parametric model fixes the scale via phi_1 = 1.
        weights *= n / weights.sum();
    }

    try {
        FitResult fit = weighted_mle(model, labeled, weights, cfg);
        fit.theta_hat = theta_hat;
        return fit;
    } catch (const NonConvergence& e) {
        throw NonConvergence(std::string("[weighted-mle stage] ") + e.what(), e.last_residual);
    } catch (const Divergence& e) {
        throw Divergence(std::string("[weighted-mle stage] ") + e.what());
    } catch (const SingularSystem& e) {
        throw SingularSystem(std::string("[weighted-mle stage] ") + e.what(), e.condition);
    }
}

}  // namespace dress
