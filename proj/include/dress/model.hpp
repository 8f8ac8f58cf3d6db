#pragma once

#include "dress/common.hpp"

namespace dress {

/// One labeled observation. For classification y is 0 or 1.
struct LabeledSample {
    Vector x;
    double y;
};

struct Dataset {
    std::vector<LabeledSample> samples;

    int size() const { return static_cast<int>(samples.size()); }
    int covariate_dim() const {
        return samples.empty() ? 0 : static_cast<int>(samples.front().x.size());
    }

    /// n x d matrix of covariates.
    Matrix covariates() const {
        Matrix X(size(), covariate_dim());
        for (int i = 0; i < size(); ++i) X.row(i) = samples[i].x.transpose();
        return X;
    }

    Vector responses() const {
        Vector y(size());
        for (int i = 0; i < size(); ++i) y[i] = samples[i].y;
        return y;
    }
};

inline double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// Conditional model p(y|x;alpha) exposed through its score function and
/// the score's Jacobian in alpha.
///
/// linear-gaussian: y = alpha^T x + z, z ~ N(0, s^2), no intercept; the
/// score drops the 1/s^2 factor (roots of the estimating equation are
/// invariant to positive scaling).
/// logistic: P(y=1|x) = sigmoid(alpha^T (1,x)), explicit intercept.
class ScoreModel {
  public:
    enum class Kind { LinearGaussian, Logistic };

    static ScoreModel linear_gaussian(int covariate_dim, double noise_sd = 1.0) {
        if (covariate_dim < 1) throw ContractViolation("covariate_dim must be positive");
        if (noise_sd <= 0.0) throw ContractViolation("noise sd must be positive");
        return ScoreModel(Kind::LinearGaussian, covariate_dim, covariate_dim, noise_sd);
    }

    static ScoreModel logistic(int covariate_dim) {
        if (covariate_dim < 1) throw ContractViolation("covariate_dim must be positive");
        return ScoreModel(Kind::Logistic, covariate_dim, covariate_dim + 1, 1.0);
    }

    Kind kind() const { return kind_; }
    int covariate_dim() const { return covariate_dim_; }
    int param_dim() const { return param_dim_; }
    double noise_sd() const { return noise_sd_; }

    /// u(x,y;alpha) = grad_alpha log p(y|x;alpha).
    Vector score(const Vector& x, double y, const Vector& alpha) const {
        check_dims(x, alpha);
        if (kind_ == Kind::LinearGaussian) {
            return (y - alpha.dot(x)) * x;
        }
        const Vector xt = with_intercept(x);
        return (y - sigmoid(alpha.dot(xt))) * xt;
    }

    /// d x d Jacobian of the score in alpha; symmetric negative semidefinite.
    Matrix score_jacobian(const Vector& x, double /*y*/, const Vector& alpha) const {
        check_dims(x, alpha);
        if (kind_ == Kind::LinearGaussian) {
            return -(x * x.transpose());
        }
        const Vector xt = with_intercept(x);
        const double p = sigmoid(alpha.dot(xt));
        return -(p * (1.0 - p)) * (xt * xt.transpose());
    }

    /// log p(y|x;alpha), up to the y-independent normalizer for the
    /// Gaussian case (uses the stored noise sd).
    double log_likelihood(const Vector& x, double y, const Vector& alpha) const {
        check_dims(x, alpha);
        if (kind_ == Kind::LinearGaussian) {
            const double r = y - alpha.dot(x);
            const double s2 = noise_sd_ * noise_sd_;
            return -0.5 * r * r / s2 - 0.5 * std::log(2.0 * M_PI * s2);
        }
        const Vector xt = with_intercept(x);
        const double t = alpha.dot(xt);
        // log sigma(t) if y=1, log(1-sigma(t)) if y=0, in a stable form
        const double log1pexp = t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
        return y * t - log1pexp;
    }

  private:
    ScoreModel(Kind kind, int covariate_dim, int param_dim, double noise_sd)
        : kind_(kind), covariate_dim_(covariate_dim), param_dim_(param_dim), noise_sd_(noise_sd) {}

    void check_dims(const Vector& x, const Vector& alpha) const {
        if (x.size() != covariate_dim_)
            throw ContractViolation("covariate dimension mismatch");
        if (alpha.size() != param_dim_)
            throw ContractViolation("parameter dimension mismatch");
    }

    Vector with_intercept(const Vector& x) const {
        Vector xt(x.size() + 1);
        xt[0] = 1.0;
        xt.tail(x.size()) = x;
        return xt;
    }

    Kind kind_;
    int covariate_dim_;
    int param_dim_;
    double noise_sd_;
};

}  // namespace dress
