#pragma once

#include "dress/common.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <sstream>

namespace dress {

using BasisFn = std::function<Vector(const Vector&)>;

/// Polynomial basis (1, x_1..x_d, x_1^2..x_d^2, ..., x_1^L..x_d^L),
/// length L*d + 1.
inline Vector poly_basis(const Vector& x, int L) {
    if (L < 1) throw ContractViolation("poly_basis requires L >= 1");
    const int d = static_cast<int>(x.size());
    Vector phi(L * d + 1);
    phi[0] = 1.0;
    Vector pw = Vector::Ones(d);
    for (int k = 1; k <= L; ++k) {
        pw = pw.cwiseProduct(x);
        phi.segment(1 + (k - 1) * d, d) = pw;
    }
    return phi;
}

inline BasisFn make_poly_basis(int L) {
    return [L](const Vector& x) { return poly_basis(x, L); };
}

/// Log-linear density-ratio model w(x;theta) = exp(phi(x)^T theta),
/// phi_1(x) == 1 by convention. theta = 0 gives w == 1.
struct RatioModel {
    BasisFn basis;
    int basis_dim = 0;
    Vector theta;

    static RatioModel poly(int covariate_dim, int L) {
        RatioModel m;
        m.basis = make_poly_basis(L);
        m.basis_dim = L * covariate_dim + 1;
        m.theta = Vector::Zero(m.basis_dim);
        return m;
    }

    Vector phi(const Vector& x) const {
        Vector p = basis(x);
        if (p.size() != basis_dim) throw ContractViolation("basis dimension mismatch");
        return p;
    }
};

inline double eval_ratio(const RatioModel& model, const Vector& x) {
    if (model.theta.size() != model.basis_dim)
        throw ContractViolation("theta dimension mismatch");
    return std::exp(model.phi(x).dot(model.theta));
}

/// Moment function eta(x;theta) used in the moment-matching equation.
/// naive-phi: eta = phi. qin-optimal: eta = phi / (1 + (n'/n) w(x;theta)).
/// custom: eta = phi + phitilde with phitilde orthogonal to span(phi).
struct MomentFunction {
    enum class Kind { NaivePhi, QinOptimal, CustomPhiTilde };

    Kind kind = Kind::NaivePhi;
    BasisFn phitilde;  // only for CustomPhiTilde

    static MomentFunction naive() { return {Kind::NaivePhi, {}}; }
    static MomentFunction qin() { return {Kind::QinOptimal, {}}; }
    static MomentFunction custom(BasisFn pt) { return {Kind::CustomPhiTilde, std::move(pt)}; }
};

inline Vector eval_moment(const MomentFunction& mf, const RatioModel& model,
                          const Vector& x, int n, int nprime) {
    if (n < 1 || nprime < 1) throw ContractViolation("sample counts must be positive");
    const Vector phi = model.phi(x);
    switch (mf.kind) {
        case MomentFunction::Kind::NaivePhi:
            return phi;
        case MomentFunction::Kind::QinOptimal: {
            const double w = std::exp(phi.dot(model.theta));
            return phi * (n / (n + w * nprime));
        }
        case MomentFunction::Kind::CustomPhiTilde:
            return phi + mf.phitilde(x);
    }
    throw ContractViolation("unknown moment function kind");
}

struct MomentSolverConfig {
    double tol = 1e-8;
    int max_iter = 100;
    int max_halvings = 20;
};

namespace detail {

inline double condition_number(const Matrix& A) {
    Eigen::JacobiSVD<Matrix> svd(A);
    const auto& sv = svd.singularValues();
    const double smin = sv[sv.size() - 1];
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return sv[0] / smin;
}

}  // namespace detail

/// Residual of the moment-matching estimating equation
///   (1/n) sum eta(x_i;theta) w(x_i;theta) - (1/n') sum eta(x'_j;theta).
inline Vector moment_residual(const std::vector<Vector>& labeled_x,
                              const std::vector<Vector>& unlabeled_x,
                              const RatioModel& model, const MomentFunction& mf) {
    const int n = static_cast<int>(labeled_x.size());
    const int np = static_cast<int>(unlabeled_x.size());
    Vector res = Vector::Zero(model.basis_dim);
    for (const auto& x : labeled_x) {
        const double w = eval_ratio(model, x);
        res += eval_moment(mf, model, x, n, np) * w / n;
    }
    for (const auto& x : unlabeled_x) {
        res -= eval_moment(mf, model, x, n, np) / np;
    }
    return res;
}

/// Moment-matching estimator of theta: damped Newton from theta = 0 with
/// analytic Jacobian and step halving on residual-norm increase.
inline Vector solve_ratio_moment(const std::vector<Vector>& labeled_x,
                                 const std::vector<Vector>& unlabeled_x,
                                 RatioModel model, const MomentFunction& mf,
                                 const MomentSolverConfig& cfg = {}) {
    const int n = static_cast<int>(labeled_x.size());
    const int np = static_cast<int>(unlabeled_x.size());
    if (n < 1 || np < 1) throw ContractViolation("need at least one sample on each side");
    const int r = model.basis_dim;
    const double rho = static_cast<double>(np) / n;

    // Gram of phi over the pooled sample must be invertible.
    {
        Matrix gram = Matrix::Zero(r, r);
        for (const auto& x : labeled_x) {
            const Vector p = model.phi(x);
            gram += p * p.transpose();
        }
        for (const auto& x : unlabeled_x) {
            const Vector p = model.phi(x);
            gram += p * p.transpose();
        }
        gram /= static_cast<double>(n + np);
        const double cond = detail::condition_number(gram);
        if (!(cond < 1e12)) {
            std::ostringstream msg;
            msg << "pooled Gram matrix of the ratio basis is singular (cond=" << cond << ")";
            throw SingularSystem(msg.str(), cond);
        }
    }

    model.theta = Vector::Zero(r);
    Vector res = moment_residual(labeled_x, unlabeled_x, model, mf);
    double res_norm = res.lpNorm<Eigen::Infinity>();

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        if (res_norm <= cfg.tol) return model.theta;

        // Analytic Jacobian of the residual in theta.
        Matrix J = Matrix::Zero(r, r);
        for (const auto& x : labeled_x) {
            const Vector phi = model.phi(x);
            const double w = std::exp(phi.dot(model.theta));
            switch (mf.kind) {
                case MomentFunction::Kind::NaivePhi:
                    J += (w / n) * (phi * phi.transpose());
                    break;
                case MomentFunction::Kind::QinOptimal: {
                    const double den = 1.0 + rho * w;
                    J += (w / (den * den) / n) * (phi * phi.transpose());
                    break;
                }
                case MomentFunction::Kind::CustomPhiTilde: {
                    const Vector eta = phi + mf.phitilde(x);
                    J += (w / n) * (eta * phi.transpose());
                    break;
                }
            }
        }
        if (mf.kind == MomentFunction::Kind::QinOptimal) {
            for (const auto& x : unlabeled_x) {
                const Vector phi = model.phi(x);
                const double w = std::exp(phi.dot(model.theta));
                const double den = 1.0 + rho * w;
                J += (rho * w / (den * den) / np) * (phi * phi.transpose());
            }
        }

        Eigen::PartialPivLU<Matrix> lu(J);
        if (std::abs(lu.determinant()) < 1e-300) {
            const double cond = detail::condition_number(J);
            std::ostringstream msg;
            msg << "Newton Jacobian singular in moment solve (cond=" << cond << ")";
            throw SingularSystem(msg.str(), cond);
        }
        const Vector step = lu.solve(-res);

        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h <= cfg.max_halvings; ++h, scale *= 0.5) {
            RatioModel trial = model;
            trial.theta = model.theta + scale * step;
            const Vector trial_res = moment_residual(labeled_x, unlabeled_x, trial, mf);
            const double trial_norm = trial_res.lpNorm<Eigen::Infinity>();
            if (trial_norm < res_norm || !std::isfinite(res_norm)) {
                model.theta = trial.theta;
                res = trial_res;
                res_norm = trial_norm;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            throw NonConvergence("moment solve stalled (no productive step)", res_norm);
        }
    }
    if (res_norm <= cfg.tol) return model.theta;
    throw NonConvergence("moment solve exceeded max iterations", res_norm);
}

// ---------------------------------------------------------------------------
// KuLSIF: kernel least-squares density-ratio fit
// ---------------------------------------------------------------------------

/// Nonparametric ratio fit: Gaussian-kernel expansion minimizing
///   (1/2n) sum_i w(x_i)^2 - (1/n') sum_j w(x'_j) + (lambda/2) ||w||_H^2
/// over the span of kernels at the pooled covariates (capped at 2000
/// deduplicated centers by deterministic strided subsampling).
struct KernelRatioFit {
    std::vector<Vector> centers;
    Vector coefficients;
    double bandwidth = 0.0;
    double ridge = 0.0;
    bool ill_conditioned = false;

    static constexpr double kWeightFloor = 1e-3;
};

namespace detail {

inline double gauss_kernel(const Vector& a, const Vector& b, double bandwidth) {
    const double d2 = (a - b).squaredNorm();
    return std::exp(-d2 / (2.0 * bandwidth * bandwidth));
}

inline std::vector<Vector> select_centers(const std::vector<Vector>& labeled_x,
                                          const std::vector<Vector>& unlabeled_x,
                                          std::size_t cap) {
    std::vector<Vector> pooled;
    pooled.reserve(labeled_x.size() + unlabeled_x.size());
    auto push_unique = [&pooled](const Vector& x) {
        for (const auto& c : pooled)
            if (c.size() == x.size() && (c - x).lpNorm<Eigen::Infinity>() == 0.0) return;
        pooled.push_back(x);
    };
    // Exact-duplicate removal matters only for tiny inputs; skip the
    // quadratic scan on realistic sizes.
    if (labeled_x.size() + unlabeled_x.size() <= 64) {
        for (const auto& x : labeled_x) push_unique(x);
        for (const auto& x : unlabeled_x) push_unique(x);
    } else {
        pooled.insert(pooled.end(), labeled_x.begin(), labeled_x.end());
        pooled.insert(pooled.end(), unlabeled_x.begin(), unlabeled_x.end());
    }
    if (pooled.size() <= cap) return pooled;
    std::vector<Vector> out;
    out.reserve(cap);
    const double stride = static_cast<double>(pooled.size()) / static_cast<double>(cap);
    for (std::size_t k = 0; k < cap; ++k) {
        out.push_back(pooled[static_cast<std::size_t>(k * stride)]);
    }
    return out;
}

}  // namespace detail

inline KernelRatioFit kulsif_fit(const std::vector<Vector>& labeled_x,
                                 const std::vector<Vector>& unlabeled_x,
                                 double bandwidth, double lambda,
                                 std::size_t center_cap = 2000) {
    if (bandwidth <= 0.0) throw ContractViolation("bandwidth must be positive");
    if (lambda <= 0.0) throw ContractViolation("ridge lambda must be positive");
    const int n = static_cast<int>(labeled_x.size());
    const int np = static_cast<int>(unlabeled_x.size());
    if (n < 1 || np < 1) throw ContractViolation("need at least one sample on each side");

    KernelRatioFit fit;
    fit.bandwidth = bandwidth;
    fit.ridge = lambda;
    fit.centers = detail::select_centers(labeled_x, unlabeled_x, center_cap);
    const int m = static_cast<int>(fit.centers.size());

    Matrix Kl(n, m), Ku(np, m), Kcc(m, m);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < m; ++c)
            Kl(i, c) = detail::gauss_kernel(labeled_x[i], fit.centers[c], bandwidth);
    for (int j = 0; j < np; ++j)
        for (int c = 0; c < m; ++c)
            Ku(j, c) = detail::gauss_kernel(unlabeled_x[j], fit.centers[c], bandwidth);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b <= a; ++b)
            Kcc(a, b) = Kcc(b, a) = detail::gauss_kernel(fit.centers[a], fit.centers[b], bandwidth);

    // Normal equations of the quadratic objective in the coefficients.
    const Matrix A = (Kl.transpose() * Kl) / n + lambda * Kcc;
    const Vector b = Ku.colwise().mean().transpose();

    Eigen::LDLT<Matrix> ldlt(A);
    fit.coefficients = ldlt.solve(b);
    if (!fit.coefficients.allFinite())
        throw SingularSystem("KuLSIF normal equations not solvable", 0.0);

    const auto d = ldlt.vectorD();
    const double dmax = d.maxCoeff();
    const double dmin = d.minCoeff();
    fit.ill_conditioned =
        ldlt.info() != Eigen::Success || !(dmin > 0.0) || dmax / dmin > 1e12;
    return fit;
}

/// Kernel expansion value, clamped below at KernelRatioFit::kWeightFloor.
inline double eval_kernel_ratio(const KernelRatioFit& fit, const Vector& x) {
    double v = 0.0;
    for (std::size_t c = 0; c < fit.centers.size(); ++c)
        v += fit.coefficients[static_cast<Eigen::Index>(c)] *
             detail::gauss_kernel(x, fit.centers[c], fit.bandwidth);
    return std::max(v, KernelRatioFit::kWeightFloor);
}

/// Max-norm relative residual of the KuLSIF normal equations at the fit.
inline double kulsif_normal_residual(const KernelRatioFit& fit,
                                     const std::vector<Vector>& labeled_x,
                                     const std::vector<Vector>& unlabeled_x) {
    const int n = static_cast<int>(labeled_x.size());
    const int np = static_cast<int>(unlabeled_x.size());
    const int m = static_cast<int>(fit.centers.size());
    Matrix Kl(n, m), Ku(np, m), Kcc(m, m);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < m; ++c)
            Kl(i, c) = detail::gauss_kernel(labeled_x[i], fit.centers[c], fit.bandwidth);
    for (int j = 0; j < np; ++j)
        for (int c = 0; c < m; ++c)
            Ku(j, c) = detail::gauss_kernel(unlabeled_x[j], fit.centers[c], fit.bandwidth);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b <= a; ++b)
            Kcc(a, b) = Kcc(b, a) = detail::gauss_kernel(fit.centers[a], fit.centers[b], fit.bandwidth);
    const Matrix A = (Kl.transpose() * Kl) / n + fit.ridge * Kcc;
    const Vector b = Ku.colwise().mean().transpose();
    const double scale = std::max(b.lpNorm<Eigen::Infinity>(), 1e-30);
    return (A * fit.coefficients - b).lpNorm<Eigen::Infinity>() / scale;
}

/// Median of pairwise Euclidean distances over a deterministic subsample
/// of at most 1000 points.
inline double median_bandwidth(const std::vector<Vector>& points, std::uint64_t seed = 0) {
    if (points.size() < 2) throw ContractViolation("median_bandwidth needs >= 2 points");
    std::vector<const Vector*> sub;
    if (points.size() <= 1000) {
        for (const auto& p : points) sub.push_back(&p);
    } else {
        Rng rng(seed, 0x6d656469);  // dedicated stream for the subsample
        std::vector<std::size_t> idx(points.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng.engine());
        for (std::size_t i = 0; i < 1000; ++i) sub.push_back(&points[idx[i]]);
    }
    std::vector<double> dist;
    dist.reserve(sub.size() * (sub.size() - 1) / 2);
    for (std::size_t i = 0; i < sub.size(); ++i)
        for (std::size_t j = i + 1; j < sub.size(); ++j)
            dist.push_back((*sub[i] - *sub[j]).norm());
    std::nth_element(dist.begin(), dist.begin() + dist.size() / 2, dist.end());
    double med = dist[dist.size() / 2];
    if (med <= 0.0) {
        // degenerate cloud: fall back to the smallest positive distance
        double smallest = std::numeric_limits<double>::infinity();
        for (double v : dist)
            if (v > 0.0) smallest = std::min(smallest, v);
        if (!std::isfinite(smallest))
            throw ContractViolation("all points identical; bandwidth undefined");
        med = smallest;
    }
    return med;
}

}  // namespace dress
