#pragma once

#include <string>
#include <utility>

#include "errors.hpp"
#include "psd_linalg.hpp"

namespace mqb {

/// Gaussian belief N(mean, cov) over theta, kept in precision form.
///
/// The precision Lambda and h = Lambda * mean are the accumulated quantities; mean and
/// cov are re-materialized after every update.
class GaussianBelief {
public:
    GaussianBelief() = default;

    /// Throws InvalidInput when cov is not positive definite.
    static GaussianBelief from_prior(const Vector& mean, const PsdMatrix& cov) {
        if (mean.size() != cov.dim()) throw InvalidInput("from_prior: mean/cov dimension mismatch");
        GaussianBelief b;
        try {
            b.precision_ = pd_inverse(cov);
        } catch (const SingularMatrixError&) {
            throw InvalidInput("from_prior: prior covariance is not positive definite");
        }
        b.mean_ = mean;
        b.cov_ = cov;
        b.precision_mean_ = b.precision_.matrix() * mean;
        return b;
    }

    static GaussianBelief from_precision(const PsdMatrix& precision, const Vector& precision_mean) {
        GaussianBelief b;
        b.precision_ = precision;
        b.precision_mean_ = precision_mean;
        b.cov_ = pd_inverse_with_retry(precision);
        b.mean_ = b.cov_.matrix() * precision_mean;
        return b;
    }

    /// All four statistics given directly; callers guarantee consistency.
    static GaussianBelief from_parts(Vector mean, PsdMatrix cov, PsdMatrix precision, Vector precision_mean) {
        GaussianBelief b;
        b.mean_ = std::move(mean);
        b.cov_ = std::move(cov);
        b.precision_ = std::move(precision);
        b.precision_mean_ = std::move(precision_mean);
        return b;
    }

    const Vector& mean() const { return mean_; }
    const PsdMatrix& cov() const { return cov_; }
    const PsdMatrix& precision() const { return precision_; }
    const Vector& precision_mean() const { return precision_mean_; }
    Eigen::Index dim() const { return mean_.size(); }

private:
    Vector mean_;
    PsdMatrix cov_;
    PsdMatrix precision_;
    Vector precision_mean_;
};

/// One conjugate step: Lambda += A A^T / sigma^2, h += A x / sigma^2.
inline GaussianBelief update(const GaussianBelief& b, const Vector& action, double x, double sigma) {
    if (action.size() != b.dim()) throw InvalidInput("update: action dimension differs from belief");
    if (!(sigma > 0.0)) throw InvalidInput("update: noise sigma must be positive");
    if (action.isZero(0.0)) return b;
    const double w = 1.0 / (sigma * sigma);
    Matrix precision = b.precision().matrix();
    precision.noalias() += w * action * action.transpose();
    const Vector h = b.precision_mean() + (w * x) * action;
    return GaussianBelief::from_precision(PsdMatrix::trusted(precision), h);
}

/// Posterior after observing all rows of `actions` with rewards `rewards` at once:
/// Sigma_t = (Sigma^-1 + A^T A / sigma^2)^-1, mu_t = Sigma_t (Sigma^-1 mu + A^T X / sigma^2).
inline GaussianBelief batch_posterior(const Vector& mean, const PsdMatrix& cov, const Matrix& actions,
                                      const Vector& rewards, double sigma) {
    if (actions.rows() != rewards.size())
        throw InvalidInput("batch_posterior: " + std::to_string(actions.rows()) + " action rows but " +
                           std::to_string(rewards.size()) + " rewards");
    if (actions.rows() == 0) return GaussianBelief::from_prior(mean, cov);
    if (actions.cols() != mean.size()) throw InvalidInput("batch_posterior: action dimension mismatch");
    if (!(sigma > 0.0)) throw InvalidInput("batch_posterior: noise sigma must be positive");
    const Eigen::Index d = mean.size();
    Eigen::LLT<Matrix> prior_llt(cov.matrix());
    if (prior_llt.info() != Eigen::Success)
        throw InvalidInput("batch_posterior: prior covariance is not positive definite");
    const Matrix prior_precision = prior_llt.solve(Matrix::Identity(d, d));
    const double w = 1.0 / (sigma * sigma);
    const Matrix precision = prior_precision + w * actions.transpose() * actions;
    Eigen::LLT<Matrix> llt(precision);
    if (llt.info() != Eigen::Success) throw SingularMatrixError("batch_posterior: posterior precision not PD");
    const Matrix post_cov = llt.solve(Matrix::Identity(d, d));
    const Vector rhs = prior_precision * mean + w * actions.transpose() * rewards;
    return GaussianBelief::from_parts(post_cov * rhs, PsdMatrix::trusted(post_cov), PsdMatrix::trusted(precision),
                                      rhs);
}

}  // namespace mqb
