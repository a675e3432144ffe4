#pragma once

// Meta-learning of the Gaussian prior across instances: per-instance OLS estimates,
// bias-corrected mean/covariance estimators, widening, and the meta-algorithm driver.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bandit_env.hpp"
#include "bound_constants.hpp"
#include "errors.hpp"
#include "gaussian_belief.hpp"
#include "policies.hpp"
#include "psd_linalg.hpp"

namespace mqb {

/// theta_hat = V^-1 A^T X with V = A^T A. Throws SingularGramError if min_eig(V) <= 1e-10.
inline Vector ols_estimate(const Matrix& actions, const Vector& rewards) {
    if (actions.rows() != rewards.size()) throw InvalidInput("ols_estimate: rows of A differ from length of X");
    if (actions.rows() == 0) throw SingularGramError("ols_estimate: no observations");
    const Matrix gram = actions.transpose() * actions;
    if (min_eig(SymMatrix(gram)) <= 1e-10) throw SingularGramError("ols_estimate: Gram matrix is singular");
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) throw SingularGramError("ols_estimate: Gram factorization failed");
    return llt.solve(actions.transpose() * rewards);
}

/// Streaming statistics of the per-instance estimates.
///
/// `count` estimates have been absorbed, so the next instance is n = count + 1. Mean and
/// scatter are accumulated with Welford updates.
class MetaState {
public:
    MetaState() = default;
    explicit MetaState(Eigen::Index d)
        : mean_(Vector::Zero(d)), scatter_(Matrix::Zero(d, d)), gram_inv_sum_(Matrix::Zero(d, d)) {}

    /// Absorbs theta_hat and the Gram matrix that produced it.
    void add(const Vector& theta_hat, const PsdMatrix& gram) {
        if (mean_.size() == 0) *this = MetaState(theta_hat.size());
        if (theta_hat.size() != mean_.size() || gram.dim() != mean_.size())
            throw InvalidInput("MetaState::add: dimension mismatch");
        if (!theta_hat.allFinite()) throw InvalidInput("MetaState::add: non-finite estimate");
        const PsdMatrix gram_inv = pd_inverse_with_retry(gram);
        ++count_;
        const Vector delta = theta_hat - mean_;
        mean_ += delta / static_cast<double>(count_);
        scatter_.noalias() += delta * (theta_hat - mean_).transpose();
        scatter_ = 0.5 * (scatter_ + scatter_.transpose());
        gram_inv_sum_ += gram_inv.matrix();
    }

    int count() const { return count_; }
    Eigen::Index dim() const { return mean_.size(); }
    const Vector& estimate_mean() const { return mean_; }
    /// sum_j (theta_hat_j - mean)(theta_hat_j - mean)^T
    const Matrix& scatter() const { return scatter_; }
    /// sum_j V_j^-1
    const Matrix& gram_inv_sum() const { return gram_inv_sum_; }

private:
    int count_ = 0;
    Vector mean_;
    Matrix scatter_;
    Matrix gram_inv_sum_;
};

inline MetaState update_meta(MetaState state, const Vector& theta_hat, const PsdMatrix& gram) {
    state.add(theta_hat, gram);
    return state;
}

/// mu_hat_n = average of the absorbed estimates.
inline Vector current_mean(const MetaState& s) {
    if (s.count() < 1) throw InsufficientData("current_mean: no instance estimates yet");
    return s.estimate_mean();
}

/// G_Sigma = sigma^2 / (n-1) sum_j V_j^-1.
inline Matrix noise_correction(const MetaState& s, double sigma) {
    if (s.count() < 1) throw InsufficientData("noise_correction: no instance estimates yet");
    return (sigma * sigma / s.count()) * s.gram_inv_sum();
}

/// Sigma_hat_n = scatter / (n-2) - G_Sigma. May be indefinite; widening restores PSD-ness.
inline SymMatrix current_cov(const MetaState& s, double sigma) {
    if (s.count() < 2) throw InsufficientData("current_cov: needs at least two instance estimates");
    return SymMatrix(s.scatter() / (s.count() - 1.0) - noise_correction(s, sigma));
}

/// c_w sqrt((5d + 2 ln(d n T)) / (n-1)).
inline double widening_scale(double c_w, int d, int n, int horizon) {
    if (n < 2) throw InvalidInput("widening_scale: n must be at least 2");
    return c_w * std::sqrt((5.0 * d + 2.0 * std::log(static_cast<double>(d) * n * horizon)) / (n - 1.0));
}

/// Sigma_hat + s I, with eigenvalues floored at 1e-8 (1 + s) so the result is a usable prior.
inline PsdMatrix widened_cov(const SymMatrix& cov, double c_w, int d, int n, int horizon) {
    const double s = widening_scale(c_w, d, n, horizon);
    Matrix m = cov.matrix();
    m.diagonal().array() += s;
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    if (es.info() != Eigen::Success) throw NumericError("widened_cov: eigendecomposition failed");
    const double floor = 1e-8 * (1.0 + s);
    if (es.eigenvalues().minCoeff() >= floor) return PsdMatrix::trusted(m);
    const Vector ev = es.eigenvalues().cwiseMax(floor);
    return PsdMatrix::trusted(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

/// (8 a^2 / lambda_bar_action) ln(d^2 N^2 T), before the max with d and the ceiling.
inline double tau_theory_raw(int d, double a, double lambda_bar_action, double instances, double horizon) {
    return 8.0 * a * a / lambda_bar_action * std::log(static_cast<double>(d) * d * instances * instances * horizon);
}

/// ceil(max{d, (8 a^2 / lambda_bar_action) ln(d^2 N^2 T)}).
inline int tau_theory(int d, double a, double lambda_bar_action, double instances, double horizon) {
    if (d <= 0 || !(a > 0) || !(lambda_bar_action > 0) || !(instances > 0) || !(horizon > 0))
        throw InvalidInput("tau_theory: inputs must be positive");
    return static_cast<int>(std::ceil(std::max<double>(d, tau_theory_raw(d, a, lambda_bar_action, instances, horizon))));
}

/// First step t (1-based) at which min_eig(V_t / sigma^2) >= threshold for the action rows
/// played so far; nullopt if it never happens.
inline std::optional<int> tau_empirical(const Matrix& actions, double sigma, double threshold) {
    if (!(threshold > 0.0)) throw InvalidInput("tau_empirical: threshold must be positive");
    Matrix gram = Matrix::Zero(actions.cols(), actions.cols());
    for (Eigen::Index t = 0; t < actions.rows(); ++t) {
        gram.noalias() += actions.row(t).transpose() * actions.row(t);
        if (std::isfinite(threshold) && identification_reached(gram, sigma, threshold)) return static_cast<int>(t + 1);
    }
    return std::nullopt;
}

enum class MetaVariant {
    th_mts_tau,   // meta-estimate from the first tau steps only
    all_mts_tau,  // tau exploration steps, meta-estimate from all T steps
    all_mts,      // no forced exploration, meta-estimate from all T steps
};

inline std::string to_string(MetaVariant v) {
    switch (v) {
        case MetaVariant::th_mts_tau: return "th_mts_tau";
        case MetaVariant::all_mts_tau: return "all_mts_tau";
        case MetaVariant::all_mts: return "all_mts";
    }
    return "?";
}

enum class TauMode { theory, empirical };
enum class N0Mode { theory, d_cubed };

struct MetaConfig {
    MetaVariant variant = MetaVariant::th_mts_tau;
    double c_w = 10.0;
    TauMode tau_mode = TauMode::empirical;
    N0Mode n0_mode = N0Mode::d_cubed;
    double threshold = 0.03;

    static MetaConfig defaults(MetaVariant v) {
        MetaConfig m;
        m.variant = v;
        m.c_w = v == MetaVariant::th_mts_tau ? 10.0 : 1.0;
        return m;
    }
};

/// Bound inputs derived from an environment (tau from the theory schedule, delta = 1/N).
inline BoundParams bound_params_for(const EnvConfig& cfg) {
    BoundParams p;
    p.d = cfg.d;
    p.T = cfg.horizon;
    p.N = cfg.instances;
    p.a = cfg.action_radius;
    p.m_bound = cfg.m_bound;
    p.sigma = cfg.noise_sigma;
    p.lambda_min_prior = cfg.lambda_min_prior;
    p.lambda_max_prior = cfg.lambda_max_prior;
    p.lambda_bar_action = cfg.lambda_bar_action;
    p.tau = tau_theory(cfg.d, cfg.action_radius, cfg.lambda_bar_action, cfg.instances, cfg.horizon);
    p.delta = std::min(1.0 / cfg.instances, 0.3);
    const EventScales ev = meta_event_scales(p, cfg.instances + 1.0);
    p.f_m = ev.f_m;
    p.f_s = ev.f_s;
    return p;
}

/// Number of exploration instances: d^3, or ceil(N0) from the bound constants.
inline long long exploration_instances(const EnvConfig& cfg, N0Mode mode) {
    if (mode == N0Mode::d_cubed) return static_cast<long long>(cfg.d) * cfg.d * cfg.d;
    const double n0 = std::ceil(bound_constants(bound_params_for(cfg)).N0);
    return n0 > 9e18 ? std::numeric_limits<long long>::max() : static_cast<long long>(n0);
}

/// Per-instance diagnostics of the prior the meta-learner used for instance n.
struct MetaDiagnostics {
    int instance = 0;
    double mean_err_l2 = std::numeric_limits<double>::quiet_NaN();
    double cov_err_op = std::numeric_limits<double>::quiet_NaN();
    int tau_used = 0;
    bool never_identified = false;
    bool used_meta_prior = false;
};

/// Stateful MQB learner for one run: hands out the prior and policy for instance n,
/// then absorbs that instance's trace.
class MetaLearner {
public:
    MetaLearner(const EnvConfig& cfg, const MetaConfig& mcfg) : cfg_(cfg), mcfg_(mcfg), state_(cfg.d) {
        if (mcfg.tau_mode == TauMode::empirical && !(mcfg.threshold > 0.0))
            throw ConfigError("meta.threshold: must be positive in empirical mode");
        if (!(mcfg.c_w >= 0.0)) throw ConfigError("meta.c_w: must be non-negative");
        n0_ = mqb::exploration_instances(cfg, mcfg.n0_mode);
        if (mcfg.variant != MetaVariant::all_mts && mcfg.tau_mode == TauMode::theory) {
            tau_ = tau_theory(cfg.d, cfg.action_radius, cfg.lambda_bar_action, cfg.instances, cfg.horizon);
            if (tau_ >= cfg.horizon)
                throw ConfigError("meta.tau_mode: theory tau = " + std::to_string(tau_) +
                                  " is not below the horizon; use the empirical mode");
        }
        uninformative_ = make_baseline_prior(BaselineKind::UKTS, cfg);
    }

    long long exploration_instances() const { return n0_; }
    int theory_tau() const { return tau_; }
    const MetaState& state() const { return state_; }

    PolicySpec policy() const {
        PolicySpec p;
        p.prior_source = PriorSource::meta;
        p.identify_threshold = mcfg_.threshold;
        if (mcfg_.variant == MetaVariant::all_mts) {
            p.explore_mode = ExploreMode::fallback_singular;
        } else if (mcfg_.tau_mode == TauMode::theory) {
            p.explore_mode = ExploreMode::first_tau;
            p.tau = tau_;
        } else {
            p.explore_mode = ExploreMode::until_identified;
        }
        return p;
    }

    /// True once instance n is past the exploration instances and estimates exist.
    bool uses_meta_prior(int n) const { return n > n0_ && state_.count() >= 2; }

    /// Prior for instance n (1-based). Exploration instances get the uninformative prior.
    GaussianBelief prior_for(int n) const {
        if (!uses_meta_prior(n)) return uninformative_;
        const Vector mu = current_mean(state_);
        const PsdMatrix cov = widened_cov(current_cov(state_, cfg_.noise_sigma), mcfg_.c_w, cfg_.d, n, cfg_.horizon);
        return GaussianBelief::from_prior(mu, cov);
    }

    /// Errors of the estimates available before instance n.
    MetaDiagnostics diagnose(int n) const {
        MetaDiagnostics diag;
        diag.instance = n;
        diag.used_meta_prior = uses_meta_prior(n);
        if (state_.count() >= 1) diag.mean_err_l2 = (current_mean(state_) - cfg_.prior_mean).norm();
        if (state_.count() >= 2) {
            const PsdMatrix w = widened_cov(current_cov(state_, cfg_.noise_sigma), mcfg_.c_w, cfg_.d, n, cfg_.horizon);
            diag.cov_err_op = op_norm(SymMatrix(w.matrix() - cfg_.prior_cov.matrix()));
        }
        return diag;
    }

    /// Absorbs the trace of the instance just played. Returns false if it was dropped.
    bool observe(const InstanceTrace& tr) {
        if (!tr.identified) return false;
        const bool tau_only = mcfg_.variant == MetaVariant::th_mts_tau;
        const int steps = tau_only ? tr.explored_steps : tr.horizon();
        const PsdMatrix& gram = tau_only ? tr.gram_tau : tr.gram_all;
        try {
            const Vector theta_hat = ols_estimate(tr.actions.topRows(steps), tr.rewards.head(steps));
            state_.add(theta_hat, gram);
        } catch (const SingularGramError&) {
            return false;
        }
        return true;
    }

private:
    EnvConfig cfg_;
    MetaConfig mcfg_;
    MetaState state_;
    long long n0_ = 0;
    int tau_ = 0;
    GaussianBelief uninformative_;
};

/// Result of one meta-algorithm run.
struct MetaRunResult {
    std::vector<double> instant_regret;  // per instance, summed over T steps
    std::vector<MetaDiagnostics> diagnostics;
    int never_identified = 0;
};

/// Runs the meta-algorithm over instances 1..N against environments from `env_for`.
/// `on_trace`, when set, sees every instance trace (used by tests).
inline MetaRunResult mqb_run(const EnvConfig& cfg, const MetaConfig& mcfg, std::uint64_t master_seed,
                             std::uint64_t run, std::uint64_t algorithm_salt,
                             const std::function<void(int, const InstanceTrace&)>& on_trace = {}) {
    MetaLearner learner(cfg, mcfg);
    const PolicySpec spec = learner.policy();
    MetaRunResult out;
    out.instant_regret.reserve(static_cast<std::size_t>(cfg.instances));
    out.diagnostics.reserve(static_cast<std::size_t>(cfg.instances));
    for (int n = 1; n <= cfg.instances; ++n) {
        const InstanceEnvironment env = make_instance_environment(cfg, master_seed, run, n);
        auto streams = AlgorithmStreams::keyed(master_seed, run, n, algorithm_salt);
        MetaDiagnostics diag = learner.diagnose(n);
        const InstanceTrace tr = run_instance(spec, learner.prior_for(n), env, cfg.noise_sigma, streams);
        diag.tau_used = tr.explored_steps;
        diag.never_identified = !learner.observe(tr);
        out.never_identified += diag.never_identified ? 1 : 0;
        out.instant_regret.push_back(tr.total_regret());
        out.diagnostics.push_back(diag);
        if (on_trace) on_trace(n, tr);
    }
    return out;
}

}  // namespace mqb
