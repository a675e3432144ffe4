#pragma once

// Thompson Sampling inside one instance, wrapped with tau uniform-exploration steps.

#include <cstdint>
#include <string>

#include "bandit_env.hpp"
#include "errors.hpp"
#include "gaussian_belief.hpp"
#include "psd_linalg.hpp"
#include "rng.hpp"

namespace mqb {

enum class PriorSource {
    true_prior,           // KTS: N(mu*, Sigma*)
    known_mean_wide_cov,  // KMTS: N(mu*, lambda_max(Sigma*) I)
    uninformative,        // UKTS: N(0, lambda_max(Sigma*) I)
    meta,                 // prior supplied by the meta-learner
};

enum class ExploreMode {
    none,               // TS from the first step
    first_tau,          // uniform exploration for steps 1..tau
    until_identified,   // uniform exploration until min_eig(V_t / sigma^2) >= threshold
    fallback_singular,  // TS, switching to uniform exploration late if V would stay singular
};

/// How one instance is played. Thompson Sampling is the only posterior-sampling
/// subroutine, so there is no separate algorithm kind.
struct PolicySpec {
    PriorSource prior_source = PriorSource::uninformative;
    ExploreMode explore_mode = ExploreMode::none;
    int tau = 0;
    double identify_threshold = 0.03;
};

/// Record of one played instance. Step t (1-based) is row/entry t-1.
struct InstanceTrace {
    Matrix actions;        // T x d
    Vector rewards;        // x_t
    Vector noises;         // xi_t
    Vector regret;         // max_A A^T theta - A_t^T theta
    Vector oracle_values;  // max_A A^T theta
    PsdMatrix gram_tau;    // sum of A_s A_s^T over s <= explored_steps
    PsdMatrix gram_all;    // sum over all T steps
    int explored_steps = 0;  // leading uniform-exploration steps
    int fallback_steps = 0;  // trailing exploration steps forced by fallback_singular
    bool identified = true;  // false when until_identified never met its threshold
    GaussianBelief final_belief;

    int horizon() const { return static_cast<int>(rewards.size()); }
    double total_regret() const { return regret.sum(); }
};

/// Posterior-sampling decision: draw theta~ from the belief and play its best action.
inline ActionChoice ts_select(const GaussianBelief& b, const ActionSet& s, RngStream& rng) {
    if (!s.ball && s.size() == 0) throw InvalidInput("ts_select: empty action set");
    const Vector sample = sample_gaussian(b.mean(), b.cov(), rng);
    return best_action(sample, s);
}

/// Uniform choice from the set (a uniform point of the ball for ball sets).
inline ActionChoice uniform_choice(const ActionSet& s, RngStream& rng, int d) {
    if (s.ball) return {0, uniform_ball(d, s.radius, rng)};
    if (s.size() == 0) throw InvalidInput("uniform_choice: empty action set");
    const std::size_t k = rng.index(static_cast<std::size_t>(s.size()));
    return {k, s.actions.row(static_cast<Eigen::Index>(k)).transpose()};
}

/// The empirical exploration stop rule: min_eig(V / sigma^2) >= threshold.
/// With sigma = 0 any nonsingular V qualifies.
inline bool identification_reached(const Matrix& gram, double sigma, double threshold) {
    const double lo = min_eig(SymMatrix(gram));
    if (sigma == 0.0) return lo > 1e-12;
    return lo / (sigma * sigma) >= threshold;
}

/// Noise level used inside the posterior. A noiseless environment (sigma = 0) is
/// modelled with a small positive likelihood noise so the update stays finite.
inline double posterior_sigma(double sigma) { return sigma > 0.0 ? sigma : 1e-3; }

/// Per-algorithm randomness, kept apart from the environment streams.
struct AlgorithmStreams {
    RngStream explore;  // which action to play during exploration steps
    RngStream ts;       // posterior samples

    static AlgorithmStreams keyed(std::uint64_t master_seed, std::uint64_t run, int instance,
                                  std::uint64_t algorithm_salt) {
        const auto n = static_cast<std::uint64_t>(instance);
        return {RngStream::keyed({master_seed, run, n, algorithm_salt, label_key("explore")}),
                RngStream::keyed({master_seed, run, n, algorithm_salt, label_key("thompson")})};
    }
};

/// Plays one instance with the given prior.
///
/// Exploration steps pick uniformly from the presented set; all other steps use
/// ts_select. The posterior is updated after every step, exploration included.
inline InstanceTrace run_instance(const PolicySpec& spec, const GaussianBelief& prior,
                                  const InstanceEnvironment& env, double sigma, AlgorithmStreams& streams) {
    const int horizon = env.horizon();
    const Vector& theta = env.instance.theta;
    const auto d = static_cast<int>(theta.size());
    if (prior.dim() != d) throw InvalidInput("run_instance: prior dimension differs from theta");
    if (spec.explore_mode == ExploreMode::first_tau && (spec.tau < 0 || spec.tau > horizon))
        throw InvalidInput("run_instance: tau must lie in [0, T]");

    InstanceTrace tr;
    tr.actions.resize(horizon, d);
    tr.rewards.resize(horizon);
    tr.noises.resize(horizon);
    tr.regret.resize(horizon);
    tr.oracle_values.resize(horizon);
    Matrix gram = Matrix::Zero(d, d);
    Matrix gram_tau = Matrix::Zero(d, d);
    const double post_sigma = posterior_sigma(sigma);

    bool exploring = spec.explore_mode == ExploreMode::first_tau ? spec.tau > 0
                     : spec.explore_mode == ExploreMode::until_identified;
    tr.identified = spec.explore_mode != ExploreMode::until_identified;
    GaussianBelief belief = prior;

    for (int t = 0; t < horizon; ++t) {
        const ActionSet& set = env.action_sets[static_cast<std::size_t>(t)];
        bool explore_now = exploring;
        if (spec.explore_mode == ExploreMode::fallback_singular && horizon - t <= d) {
            // Remaining steps (including this one) can only just complete a basis.
            const auto deficiency = d - static_cast<int>(psd_rank(SymMatrix(gram)));
            explore_now = deficiency > 0 && horizon - t <= deficiency;
        }

        const ActionChoice choice = explore_now ? uniform_choice(set, streams.explore, d)
                                                : ts_select(belief, set, streams.ts);
        const Vector& a = choice.action;
        const double xi = env.noise(t);
        const double x = a.dot(theta) + xi;
        const double best = oracle_value(theta, set);

        tr.actions.row(t) = a.transpose();
        tr.rewards(t) = x;
        tr.noises(t) = xi;
        tr.oracle_values(t) = best;
        tr.regret(t) = best - a.dot(theta);
        gram.noalias() += a * a.transpose();
        if (explore_now && spec.explore_mode == ExploreMode::fallback_singular) ++tr.fallback_steps;

        if (exploring) {
            gram_tau = gram;
            tr.explored_steps = t + 1;
            if (spec.explore_mode == ExploreMode::first_tau && t + 1 >= spec.tau) exploring = false;
            if (spec.explore_mode == ExploreMode::until_identified &&
                identification_reached(gram, sigma, spec.identify_threshold)) {
                exploring = false;
                tr.identified = true;
            }
        }
        belief = update(belief, a, x, post_sigma);
    }
    tr.gram_tau = PsdMatrix::trusted(gram_tau);
    tr.gram_all = PsdMatrix::trusted(gram);
    tr.final_belief = std::move(belief);
    return tr;
}

enum class BaselineKind { UKTS, KMTS, KTS };

inline std::string to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::UKTS: return "UKTS";
        case BaselineKind::KMTS: return "KMTS";
        case BaselineKind::KTS: return "KTS";
    }
    return "?";
}

/// UKTS: (0, lambda_max(Sigma*) I); KMTS: (mu*, lambda_max(Sigma*) I); KTS: (mu*, Sigma*).
/// None of them explores.
inline GaussianBelief make_baseline_prior(BaselineKind kind, const EnvConfig& cfg) {
    const double wide = max_eig(cfg.prior_cov);
    switch (kind) {
        case BaselineKind::UKTS:
            return GaussianBelief::from_prior(Vector::Zero(cfg.d), PsdMatrix::scaled_identity(cfg.d, wide));
        case BaselineKind::KMTS:
            return GaussianBelief::from_prior(cfg.prior_mean, PsdMatrix::scaled_identity(cfg.d, wide));
        case BaselineKind::KTS:
            return GaussianBelief::from_prior(cfg.prior_mean, cfg.prior_cov);
    }
    throw InvalidInput("make_baseline_prior: unknown kind");
}

inline PolicySpec baseline_policy(BaselineKind kind) {
    PolicySpec p;
    p.prior_source = kind == BaselineKind::KTS    ? PriorSource::true_prior
                     : kind == BaselineKind::KMTS ? PriorSource::known_mean_wide_cov
                                                  : PriorSource::uninformative;
    p.explore_mode = ExploreMode::none;
    return p;
}

}  // namespace mqb
