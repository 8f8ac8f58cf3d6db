#pragma once

#include "dress/common.hpp"
#include "dress/model.hpp"

#include <functional>

namespace dress {

/// ubar(x) = E[u(x,y;alpha*) | x], the score averaged over the true
/// conditional law. Nonzero exactly when the conditional model is
/// misspecified.
struct UbarSpec {
    enum class Kind { AnalyticRegression, MonteCarlo };

    Kind kind = Kind::AnalyticRegression;

    // analytic-regression: ubar(x) = (f(x) - alpha_star^T x) x
    std::function<double(const Vector&)> f;
    Vector alpha_star;

    // monte-carlo: average u(x, y_k, alpha_star) over m draws y_k ~ p(y|x)
    const ScoreModel* model = nullptr;
    std::function<double(const Vector&, Rng&)> sample_y;
    int mc_draws = 0;
    std::uint64_t seed = 0;

    static UbarSpec analytic(std::function<double(const Vector&)> f, Vector alpha_star) {
        UbarSpec s;
        s.kind = Kind::AnalyticRegression;
        s.f = std::move(f);
        s.alpha_star = std::move(alpha_star);
        return s;
    }

    static UbarSpec monte_carlo(const ScoreModel& model,
                                std::function<double(const Vector&, Rng&)> sample_y,
                                Vector alpha_star, int m, std::uint64_t seed) {
        UbarSpec s;
        s.kind = Kind::MonteCarlo;
        s.model = &model;
        s.sample_y = std::move(sample_y);
        s.alpha_star = std::move(alpha_star);
        s.mc_draws = m;
        s.seed = seed;
        return s;
    }
};

inline Vector ubar(const UbarSpec& spec, const Vector& x) {
    if (spec.kind == UbarSpec::Kind::AnalyticRegression) {
        return (spec.f(x) - spec.alpha_star.dot(x)) * x;
    }
    if (spec.mc_draws < 1) throw ContractViolation("mc_draws must be positive");
    Rng rng(spec.seed, std::hash<double>{}(x.sum()));
    Vector acc = Vector::Zero(spec.model->param_dim());
    for (int k = 0; k < spec.mc_draws; ++k) {
        const double y = spec.sample_y(x, rng);
        acc += spec.model->score(x, y, spec.alpha_star);
    }
    return acc / spec.mc_draws;
}

struct Projection {
    Matrix B;      // d x r: Ehat[ubar phi^T] Ehat[phi phi^T]^-1
    Matrix proj;   // n x d: rows are B phi(x_i)
    Matrix resid;  // n x d: ubar - proj
};

/// Empirical projection of ubar onto span(phi) under the covariate law.
/// The normal equations make Ehat[resid phi^T] vanish exactly.
inline Projection project_ubar(const Matrix& ubar_samples, const Matrix& phi_samples) {
    if (ubar_samples.rows() != phi_samples.rows())
        throw ContractViolation("sample count mismatch");
    const Eigen::Index n = phi_samples.rows();
    const Matrix gram = phi_samples.transpose() * phi_samples / static_cast<double>(n);
    Eigen::JacobiSVD<Matrix> svd(gram, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv[sv.size() - 1] <= 1e-12 * sv[0]) {
        throw SingularSystem("Gram matrix of the ratio basis is singular",
                             sv[0] / std::max(sv[sv.size() - 1], 1e-300));
    }
    const Matrix cross = ubar_samples.transpose() * phi_samples / static_cast<double>(n);
    Projection p;
    p.B = svd.solve(cross.transpose()).transpose();
    p.proj = phi_samples * p.B.transpose();
    p.resid = ubar_samples - p.proj;
    return p;
}

struct ImprovementReport {
    enum class Mode { GeneralEta, EtaEqualsPhi, OptimalPhiTilde };

    Matrix diff_matrix;   // d x d, symmetric
    Matrix e_ubar_ubar;   // Ehat[ubar ubar^T] (uncentered)
    Matrix e_proj_proj;   // Ehat[Pi_phi ubar (Pi_phi ubar)^T]
    Matrix e_resid_resid; // Ehat[Pi_perp ubar (Pi_perp ubar)^T]
    Matrix B;
    Eigen::Index sample_size_used = 0;
    Mode mode = Mode::GeneralEta;
};

namespace detail {

inline Matrix empirical_cov(const Matrix& samples) {
    const Eigen::Index n = samples.rows();
    const Eigen::RowVectorXd mean = samples.colwise().mean();
    const Matrix centered = samples.rowwise() - mean;
    return centered.transpose() * centered / static_cast<double>(n);
}

inline Matrix second_moment(const Matrix& samples) {
    return samples.transpose() * samples / static_cast<double>(samples.rows());
}

inline void fill_components(ImprovementReport& rep, const Matrix& ubar_samples,
                            const Projection& p) {
    rep.e_ubar_ubar = second_moment(ubar_samples);
    rep.e_proj_proj = second_moment(p.proj);
    rep.e_resid_resid = second_moment(p.resid);
    rep.B = p.B;
    rep.sample_size_used = ubar_samples.rows();
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

/// Diff[u] for a general moment function, evaluated at theta*:
///   n'/(n+n') E[ubar ubar^T] - (1 + n/n') V[B eta - n'/(n+n') ubar].
/// All expectations are empirical means over the given samples; V[.] is the
/// centered empirical covariance.
inline ImprovementReport diff_general(const Matrix& ubar_samples, const Matrix& phi_samples,
                                      const Matrix& eta_samples, int n, int nprime) {
    if (eta_samples.rows() != ubar_samples.rows())
        throw ContractViolation("sample count mismatch");
    const Projection p = project_ubar(ubar_samples, phi_samples);
    const double c = static_cast<double>(nprime) / (n + nprime);
    const Matrix inner = eta_samples * p.B.transpose() - c * ubar_samples;
    ImprovementReport rep;
    rep.mode = ImprovementReport::Mode::GeneralEta;
    detail::fill_components(rep, ubar_samples, p);
    rep.diff_matrix = detail::symmetrize(
        c * detail::empirical_cov(ubar_samples) -
        (1.0 + static_cast<double>(n) / nprime) * detail::empirical_cov(inner));
    return rep;
}

/// Diff[u] specialized to eta(x;theta*) proportional to phi (phitilde = 0):
///   (n'-n)/n' E[Pi_phi ubar (Pi_phi ubar)^T].
inline ImprovementReport diff_eta_phi(const Matrix& ubar_samples, const Matrix& phi_samples,
                                      int n, int nprime) {
    const Projection p = project_ubar(ubar_samples, phi_samples);
    ImprovementReport rep;
    rep.mode = ImprovementReport::Mode::EtaEqualsPhi;
    detail::fill_components(rep, ubar_samples, p);
    const double pref = static_cast<double>(nprime - n) / nprime;
    rep.diff_matrix = detail::symmetrize(pref * detail::empirical_cov(p.proj));
    return rep;
}

struct OptimalPhiTilde {
    Matrix phitilde_samples;  // n x r
    double check = 0.0;       // max-norm of B phitilde - n'/(n+n') Pi_perp ubar
};

/// The optimal orthogonal component of the moment function:
///   phitilde = n'/(n+n') B^T (B B^T)^-1 Pi_perp ubar.
/// Requires B row full rank (r >= d).
inline OptimalPhiTilde optimal_phitilde(const Matrix& ubar_samples, const Matrix& phi_samples,
                                        int n, int nprime) {
    const Projection p = project_ubar(ubar_samples, phi_samples);
    const Eigen::Index d = p.B.rows();
    Eigen::JacobiSVD<Matrix> svd(p.B, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > 1e-10 * sv[0]) ++rank;
    if (rank < d)
        throw RankDeficient("B is not row full rank; optimal phitilde undefined", rank);

    const double c = static_cast<double>(nprime) / (n + nprime);
    const Matrix bbt_inv_resid =
        (p.B * p.B.transpose()).ldlt().solve(p.resid.transpose());  // d x n
    OptimalPhiTilde out;
    out.phitilde_samples = c * (p.B.transpose() * bbt_inv_resid).transpose();  // n x r
    const Matrix check = out.phitilde_samples * p.B.transpose() - c * p.resid;
    out.check = check.lpNorm<Eigen::Infinity>();
    return out;
}

/// Maximum achievable variance improvement:
///   n'/(n+n') E[Pi_perp ubar (.)^T] + (n'-n)/n' E[Pi_phi ubar (.)^T].
inline ImprovementReport diff_optimal(const Matrix& ubar_samples, const Matrix& phi_samples,
                                      int n, int nprime) {
    const Projection p = project_ubar(ubar_samples, phi_samples);
    ImprovementReport rep;
    rep.mode = ImprovementReport::Mode::OptimalPhiTilde;
    detail::fill_components(rep, ubar_samples, p);
    const double c = static_cast<double>(nprime) / (n + nprime);
    const double pref = static_cast<double>(nprime - n) / nprime;
    rep.diff_matrix = detail::symmetrize(c * detail::empirical_cov(p.resid) +
                                         pref * detail::empirical_cov(p.proj));
    return rep;
}

/// Empirical sandwich variance n * A Cov(alpha_hat) A^T where A is the mean
/// score Jacobian over a large evaluation sample.
inline Matrix empirical_sandwich(const Matrix& mean_grad,
                                 const std::vector<Vector>& alpha_hats, int n) {
    if (alpha_hats.size() < 2)
        throw ContractViolation("need at least two replications");
    const Eigen::Index d = alpha_hats.front().size();
    Matrix A(static_cast<Eigen::Index>(alpha_hats.size()), d);
    for (std::size_t i = 0; i < alpha_hats.size(); ++i)
        A.row(static_cast<Eigen::Index>(i)) = alpha_hats[i].transpose();
    const Matrix cov = detail::empirical_cov(A);
    return n * mean_grad * cov * mean_grad.transpose();
}

/// Mean score Jacobian over an evaluation covariate sample. For both model
/// kinds the Jacobian does not depend on y; a placeholder response is used.
inline Matrix mean_score_jacobian(const ScoreModel& model, const std::vector<Vector>& xs,
                                  const Vector& alpha) {
    Matrix acc = Matrix::Zero(model.param_dim(), model.param_dim());
    for (const auto& x : xs) acc += model.score_jacobian(x, 0.0, alpha);
    return acc / static_cast<double>(xs.size());
}

}  // namespace dress
