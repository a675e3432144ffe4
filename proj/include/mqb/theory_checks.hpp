#pragma once

// Numerical verifiers for the constructions behind the relative-regret analysis:
// covariance alignment of exploration actions, mean alignment of noise terms, the
// Jacobian determinant bound of the alignment map, good-event frequencies and the
// Monte Carlo behaviour of the meta-estimators.

#include <cmath>
#include <limits>
#include <string>

#include "bandit_env.hpp"
#include "bound_constants.hpp"
#include "errors.hpp"
#include "meta_prior.hpp"
#include "psd_linalg.hpp"
#include "rng.hpp"

namespace mqb {

/// B = sigma^2 (Sigma*^-1 - Sigma_hat^-1). Requires Sigma_hat >= Sigma* (to 1e-10).
inline PsdMatrix compute_B(const PsdMatrix& sigma_hat, const PsdMatrix& sigma_star, double sigma) {
    if (sigma_hat.dim() != sigma_star.dim()) throw InvalidInput("compute_B: dimension mismatch");
    if (min_eig(SymMatrix(sigma_hat.matrix() - sigma_star.matrix())) < -1e-10)
        throw InvalidInput("compute_B: Sigma_hat does not dominate Sigma*");
    const Matrix b = sigma * sigma * (pd_inverse(sigma_star).matrix() - pd_inverse(sigma_hat).matrix());
    // PSD in exact arithmetic; clip the rounding dust.
    return PsdMatrix::trusted(detail::spectral_apply(0.5 * (b + b.transpose()), [](double x) { return x; }));
}

/// A_k = A_m V_m^-1/2 (V_m - B)^1/2, so that A_k^T A_k = V_m - B.
inline Matrix align_actions(const Matrix& actions_m, const PsdMatrix& b) {
    const Matrix gram = actions_m.transpose() * actions_m;
    if (b.dim() != gram.rows()) throw InvalidInput("align_actions: dimension mismatch");
    const SymMatrix reduced(gram - b.matrix());
    if (!(min_eig(reduced) > 0.0)) throw InvalidInput("align_actions: V_m - B is not positive definite");
    return actions_m * pd_inv_sqrt(PsdMatrix::trusted(gram)).matrix() * psd_sqrt(PsdMatrix::trusted(reduced.matrix())).matrix();
}

/// Inverse map on the image: A_m = A_k V_k^-1/2 (V_k + B)^1/2.
inline Matrix unalign_actions(const Matrix& actions_k, const PsdMatrix& b) {
    const Matrix gram = actions_k.transpose() * actions_k;
    if (b.dim() != gram.rows()) throw InvalidInput("unalign_actions: dimension mismatch");
    return actions_k * pd_inv_sqrt(PsdMatrix::trusted(gram)).matrix() *
           psd_sqrt(PsdMatrix::trusted(gram + b.matrix())).matrix();
}

/// prod_t f(A_m,t) / f(A_k,t) for the zero-mean Gaussian action density N(0, cov).
inline double gaussian_density_ratio(const Matrix& actions_m, const Matrix& actions_k, const PsdMatrix& action_cov) {
    if (actions_m.rows() != actions_k.rows() || actions_m.cols() != actions_k.cols())
        throw InvalidInput("gaussian_density_ratio: shape mismatch");
    const Matrix prec = pd_inverse(action_cov).matrix();
    double log_ratio = 0.0;
    for (Eigen::Index t = 0; t < actions_m.rows(); ++t) {
        const Vector am = actions_m.row(t).transpose();
        const Vector ak = actions_k.row(t).transpose();
        log_ratio -= 0.5 * (am.dot(prec * am) - ak.dot(prec * ak));
    }
    return std::exp(log_ratio);
}

/// G = sigma^2 Sigma_hat^-1 (mu_hat - mu*) + B (theta - mu*).
inline Vector compute_G(const Vector& mu_hat, const Vector& mu_star, const Vector& theta, const PsdMatrix& sigma_hat,
                        const PsdMatrix& b, double sigma) {
    const auto d = mu_hat.size();
    if (mu_star.size() != d || theta.size() != d || sigma_hat.dim() != d || b.dim() != d)
        throw InvalidInput("compute_G: dimension mismatch");
    Eigen::LLT<Matrix> llt(sigma_hat.matrix());
    if (llt.info() != Eigen::Success) throw SingularMatrixError("compute_G: Sigma_hat is not positive definite");
    return sigma * sigma * llt.solve(mu_hat - mu_star) + b.matrix() * (theta - mu_star);
}

/// S_k = G + (V_k + B)^1/2 V_k^-1/2 S_m.
inline Vector align_noise(const Vector& s_m, const PsdMatrix& gram_k, const PsdMatrix& b, const Vector& g) {
    return g + psd_sqrt(PsdMatrix::trusted(gram_k.matrix() + b.matrix())).matrix() * pd_inv_sqrt(gram_k).matrix() * s_m;
}

struct JacobianCheck {
    double numeric_inv_absdet = std::numeric_limits<double>::quiet_NaN();
    double bound = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    bool skipped = false;
};

/// U(X) = X (X^T X)^-1/2 (X^T X - B)^1/2.
inline Matrix alignment_map(const Matrix& x, const PsdMatrix& b) { return align_actions(x, b); }

/// Finite-difference check of 1/|det dU/dX| <= (det X^T X / det(X^T X - B))^(n/2).
///
/// Central differences with step 1e-6 (1 + ||X||_op). Cases with
/// min_eig(X^T X - B) < 1e-6 are skipped (derivatives blow up near the boundary).
inline JacobianCheck jacobian_bound_check(const Matrix& x, const PsdMatrix& b) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (n * d > 36) throw InvalidInput("jacobian_bound_check: n*d must not exceed 36");
    if (b.dim() != d) throw InvalidInput("jacobian_bound_check: dimension mismatch");
    const Matrix gram = x.transpose() * x;
    const SymMatrix reduced(gram - b.matrix());
    JacobianCheck out;
    if (min_eig(reduced) < 1e-6) {
        out.skipped = true;
        return out;
    }
    const Eigen::Index m = n * d;
    const double h = 1e-6 * (1.0 + op_norm(x));
    Matrix jac(m, m);
    for (Eigen::Index k = 0; k < m; ++k) {
        Matrix plus = x;
        Matrix minus = x;
        plus.data()[k] += h;
        minus.data()[k] -= h;
        const Matrix diff = (alignment_map(plus, b) - alignment_map(minus, b)) / (2.0 * h);
        jac.col(k) = Eigen::Map<const Vector>(diff.data(), m);
    }
    out.numeric_inv_absdet = 1.0 / std::abs(jac.fullPivLu().determinant());
    out.bound = std::pow(gram.determinant() / reduced.matrix().determinant(), static_cast<double>(n) / 2.0);
    out.ok = out.numeric_inv_absdet <= out.bound * (1.0 + 1e-3);
    return out;
}

struct GoodEventReport {
    long theta_trials = 0;
    long gram_trials = 0;
    long theta_failures = 0;  // ||Sigma*^-1/2 (theta - mu*)||_inf^2 > 2 ln(d^2 T / delta)
    long gram_failures = 0;   // min_eig(V_tau) < lambda_bar_action d / 2
    double target = 0.0;      // delta / (d T)
    double theta_rate() const { return theta_trials ? static_cast<double>(theta_failures) / theta_trials : 0.0; }
    double gram_rate() const { return gram_trials ? static_cast<double>(gram_failures) / gram_trials : 0.0; }
    /// target plus three binomial standard deviations at the target rate.
    double slack(long trials) const { return target + 3.0 * std::sqrt(target * (1.0 - target) / trials); }
    bool theta_ok() const { return theta_rate() <= slack(theta_trials); }
    bool gram_ok() const { return gram_rate() <= slack(gram_trials); }
};

/// Monte Carlo frequencies of the theta-concentration and Gram-eigenvalue events.
/// Exploration actions are uniform on the radius-a ball (a uniform pick among i.i.d.
/// ball draws has that law).
inline GoodEventReport good_event_probe(const EnvConfig& cfg, int tau, double delta, long theta_trials,
                                        long gram_trials, RngStream& rng) {
    if (theta_trials < 1000 || gram_trials < 1000) throw InvalidInput("good_event_probe: trials must be >= 1000");
    if (!(delta > 0.0)) throw InvalidInput("good_event_probe: delta must be positive");
    GoodEventReport rep;
    rep.theta_trials = theta_trials;
    rep.gram_trials = gram_trials;
    rep.target = delta / (static_cast<double>(cfg.d) * cfg.horizon);
    const double theta_cut = 2.0 * std::log(static_cast<double>(cfg.d) * cfg.d * cfg.horizon / delta);
    const Matrix whiten = pd_inv_sqrt(cfg.prior_cov).matrix();
    for (long i = 0; i < theta_trials; ++i) {
        const Vector theta = sample_gaussian(cfg.prior_mean, cfg.prior_cov, rng);
        const Vector z = whiten * (theta - cfg.prior_mean);
        if (z.cwiseAbs2().maxCoeff() > theta_cut) ++rep.theta_failures;
    }
    const double gram_cut = cfg.lambda_bar_action * cfg.d / 2.0;
    for (long i = 0; i < gram_trials; ++i) {
        Matrix gram = Matrix::Zero(cfg.d, cfg.d);
        for (int t = 0; t < tau; ++t) {
            const Vector a = uniform_ball(cfg.d, cfg.action_radius, rng);
            gram.noalias() += a * a.transpose();
        }
        if (min_eig(SymMatrix(gram)) < gram_cut) ++rep.gram_failures;
    }
    return rep;
}

struct EstimatorBiasReport {
    long trials = 0;
    Vector rho_mean;              // E[rho], rho = theta_hat - theta
    Vector rho_se;                // standard errors of rho_mean
    double rho_moment_gap = 0.0;  // ||E[rho rho^T] - sigma^2 E[V^-1]||_op
    double rho_moment_ref = 0.0;  // ||sigma^2 E[V^-1]||_op
    Vector theta_hat_bias;        // E[theta_hat] - mu*
    Vector theta_hat_se;
    double cov_gap = 0.0;  // ||Sigma_hat_n - Sigma*||_op with n - 1 = trials
    double cov_ref = 0.0;  // ||Sigma*||_op
};

/// Monte Carlo behaviour of the per-instance OLS estimate and the meta-estimators when
/// every instance explores uniformly for tau steps.
inline EstimatorBiasReport estimator_bias_probe(const EnvConfig& cfg, int tau, long trials, RngStream& rng) {
    if (trials < 10000) throw InvalidInput("estimator_bias_probe: trials must be >= 1e4");
    if (tau < cfg.d) throw InvalidInput("estimator_bias_probe: tau must be at least d");
    const int d = cfg.d;
    const double sigma = cfg.noise_sigma;
    Vector rho_sum = Vector::Zero(d), rho_sq = Vector::Zero(d);
    Matrix rho_outer = Matrix::Zero(d, d), gram_inv = Matrix::Zero(d, d);
    Vector th_sum = Vector::Zero(d), th_sq = Vector::Zero(d);
    MetaState state(d);
    Matrix actions(tau, d);
    Vector noise(tau);
    for (long i = 0; i < trials; ++i) {
        const Vector theta = sample_gaussian(cfg.prior_mean, cfg.prior_cov, rng);
        for (int t = 0; t < tau; ++t) {
            actions.row(t) = uniform_ball(d, cfg.action_radius, rng).transpose();
            noise(t) = sigma * rng.normal();
        }
        const Matrix gram = actions.transpose() * actions;
        const PsdMatrix vinv = pd_inverse(PsdMatrix::trusted(gram));
        // theta_hat - theta = V^-1 A^T Xi exactly.
        const Vector rho = vinv.matrix() * (actions.transpose() * noise);
        const Vector theta_hat = ols_estimate(actions, actions * theta + noise);
        rho_sum += rho;
        rho_sq += rho.cwiseAbs2();
        rho_outer.noalias() += rho * rho.transpose();
        gram_inv += vinv.matrix();
        th_sum += theta_hat;
        th_sq += theta_hat.cwiseAbs2();
        state.add(theta_hat, PsdMatrix::trusted(gram));
    }
    const double n = static_cast<double>(trials);
    EstimatorBiasReport rep;
    rep.trials = trials;
    rep.rho_mean = rho_sum / n;
    rep.rho_se = ((rho_sq / n - rep.rho_mean.cwiseAbs2()).cwiseMax(0.0) * (n / (n - 1.0)) / n).cwiseSqrt();
    const Matrix noise_moment = sigma * sigma * gram_inv / n;
    rep.rho_moment_gap = op_norm(SymMatrix(rho_outer / n - noise_moment));
    rep.rho_moment_ref = op_norm(SymMatrix(noise_moment));
    const Vector th_mean = th_sum / n;
    rep.theta_hat_bias = th_mean - cfg.prior_mean;
    rep.theta_hat_se = ((th_sq / n - th_mean.cwiseAbs2()).cwiseMax(0.0) * (n / (n - 1.0)) / n).cwiseSqrt();
    rep.cov_gap = op_norm(SymMatrix(current_cov(state, sigma).matrix() - cfg.prior_cov.matrix()));
    rep.cov_ref = op_norm(cfg.prior_cov);
    return rep;
}

}  // namespace mqb
