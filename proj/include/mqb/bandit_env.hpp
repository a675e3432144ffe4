#pragma once

// Meta-environment: task vectors theta_n ~ N(mu*, Sigma*), per-step action sets,
// noisy rewards and the oracle action.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "psd_linalg.hpp"
#include "rng.hpp"

namespace mqb {

struct EnvConfig {
    int d = 0;
    int horizon = 0;    // T, steps per instance
    int instances = 0;  // N
    /// Finite number of actions per step; nullopt means the full ball B_a(0).
    std::optional<int> num_actions;
    double action_radius = 0.0;  // a
    double noise_sigma = 0.0;    // sigma
    Vector prior_mean;           // mu*
    PsdMatrix prior_cov;         // Sigma*
    double m_bound = 0.0;        // bound on ||mu*||
    double lambda_bar_action = 0.0;  // lower bound on min eig of the action covariance
    double lambda_min_prior = 0.0;   // lower bound on min eig of Sigma*
    double lambda_max_prior = 0.0;   // upper bound on max eig of Sigma*

    bool ball_actions() const { return !num_actions.has_value(); }

    /// Throws ConfigError naming the offending field.
    void validate() const {
        auto fail = [](const std::string& key, const std::string& why) {
            throw ConfigError("env." + key + ": " + why);
        };
        if (d <= 0) fail("d", "must be positive");
        if (horizon <= 0) fail("horizon", "must be positive");
        if (instances <= 0) fail("instances", "must be positive");
        if (num_actions && *num_actions <= 0) fail("num_actions", "must be positive");
        if (!(action_radius > 0.0)) fail("action_radius", "must be positive");
        if (!(noise_sigma >= 0.0)) fail("noise_sigma", "must be non-negative");
        if (prior_mean.size() != d) fail("prior_mean", "dimension differs from d");
        if (prior_cov.dim() != d) fail("prior_cov", "dimension differs from d");
        if (!(m_bound > 0.0)) fail("m_bound", "must be positive");
        if (prior_mean.norm() > m_bound * (1.0 + 1e-12)) fail("m_bound", "||prior_mean|| exceeds m_bound");
        if (!(lambda_bar_action > 0.0)) fail("lambda_bar_action", "must be positive");
        // Finite sets are drawn from the ball too, so a uniformly chosen action is ball-uniform.
        if (lambda_bar_action > action_radius * action_radius / (d + 2) * (1.0 + 1e-12))
            fail("lambda_bar_action", "exceeds the uniform-ball covariance eigenvalue a^2/(d+2)");
        const auto [lo, hi] = eig_extrema(prior_cov);
        if (!(lambda_min_prior > 0.0)) fail("lambda_min_prior", "must be positive");
        if (lambda_min_prior > lo * (1.0 + 1e-9)) fail("lambda_min_prior", "exceeds min eigenvalue of prior_cov");
        if (lambda_max_prior < hi * (1.0 - 1e-9)) fail("lambda_max_prior", "below max eigenvalue of prior_cov");
    }
};

/// Uniform-ball covariance eigenvalue a^2/(d+2).
inline double ball_action_eigenvalue(int d, double a) { return a * a / (d + 2); }

/// Fills m_bound and the eigenvalue bounds from mu*, Sigma* and the action geometry.
inline void fill_tight_bounds(EnvConfig& cfg) {
    const auto [lo, hi] = eig_extrema(cfg.prior_cov);
    cfg.lambda_min_prior = lo;
    cfg.lambda_max_prior = hi;
    cfg.m_bound = std::max(cfg.prior_mean.norm(), 1e-12);
    cfg.lambda_bar_action = ball_action_eigenvalue(cfg.d, cfg.action_radius);
}

/// The synthetic setup of the reference experiment: d=5, T=200, 20 actions per step
/// uniform in the radius-0.25 ball, unit noise, mu* = (2,...,2), Sigma* with unit
/// diagonal and 0.8 elsewhere.
inline EnvConfig reference_experiment(int instances = 10000) {
    EnvConfig cfg;
    cfg.d = 5;
    cfg.horizon = 200;
    cfg.instances = instances;
    cfg.num_actions = 20;
    cfg.action_radius = 0.25;
    cfg.noise_sigma = 1.0;
    cfg.prior_mean = Vector::Constant(5, 2.0);
    cfg.prior_cov = equicorrelated(5, 1.0, 0.8);
    fill_tight_bounds(cfg);
    return cfg;
}

struct Instance {
    int index = 0;
    Vector theta;
};

/// Either K finite actions (rows of `actions`) or the full ball of radius `radius`.
struct ActionSet {
    Matrix actions;
    bool ball = false;
    double radius = 0.0;

    Eigen::Index size() const { return actions.rows(); }
};

struct ActionChoice {
    std::size_t index = 0;
    Vector action;
};

inline Instance sample_instance(const EnvConfig& cfg, RngStream& rng, int index = 1) {
    return {index, sample_gaussian(cfg.prior_mean, cfg.prior_cov, rng)};
}

/// Uniform draw from the radius-a ball: uniform direction, radius a * u^(1/d).
inline Vector uniform_ball(int d, double a, RngStream& rng) {
    Vector z(d);
    double norm = 0.0;
    do {
        for (int i = 0; i < d; ++i) z(i) = rng.normal();
        norm = z.norm();
    } while (norm == 0.0);
    const double r = a * std::pow(rng.uniform(), 1.0 / d);
    return z * (r / norm);
}

inline ActionSet sample_action_set(const EnvConfig& cfg, RngStream& rng) {
    ActionSet s;
    s.radius = cfg.action_radius;
    if (cfg.ball_actions()) {
        s.ball = true;
        return s;
    }
    s.actions.resize(*cfg.num_actions, cfg.d);
    for (int k = 0; k < *cfg.num_actions; ++k) s.actions.row(k) = uniform_ball(cfg.d, cfg.action_radius, rng).transpose();
    return s;
}

struct Reward {
    double x;   // observed reward A^T theta + xi
    double xi;  // the noise that was added
};

inline Reward reward(const Vector& theta, const Vector& action, double sigma, RngStream& rng) {
    if (theta.size() != action.size()) throw InvalidInput("reward: theta and action dimensions differ");
    const double xi = sigma * rng.normal();
    return {action.dot(theta) + xi, xi};
}

/// argmax_A A^T v over the set; lowest index wins ties. For the ball: a * v / ||v||.
inline ActionChoice best_action(const Vector& v, const ActionSet& s) {
    if (s.ball) {
        const double n = v.norm();
        return {0, n > 0.0 ? Vector(v * (s.radius / n)) : Vector(Vector::Zero(v.size()))};
    }
    if (s.size() == 0) throw InvalidInput("best_action: empty action set");
    if (s.actions.cols() != v.size()) throw InvalidInput("best_action: dimension mismatch");
    const Vector scores = s.actions * v;
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.size(); ++k)
        if (scores(k) > scores(best)) best = k;
    return {static_cast<std::size_t>(best), s.actions.row(best).transpose()};
}

inline ActionChoice oracle_action(const Vector& theta, const ActionSet& s) { return best_action(theta, s); }

/// Value of the best available action, max_A A^T theta.
inline double oracle_value(const Vector& theta, const ActionSet& s) {
    return oracle_action(theta, s).action.dot(theta);
}

// Stream purposes. Environment streams never include an algorithm key.
inline constexpr std::uint64_t kThetaStream = label_key("theta");
inline constexpr std::uint64_t kActionStream = label_key("action-sets");
inline constexpr std::uint64_t kNoiseStream = label_key("reward-noise");

/// Everything the environment draws for one instance: theta, an action set per step
/// and the reward noise per step. Shared by all algorithms in a run.
struct InstanceEnvironment {
    Instance instance;
    std::vector<ActionSet> action_sets;
    Vector noise;  // xi_t, already scaled by sigma

    int horizon() const { return static_cast<int>(action_sets.size()); }
};

inline InstanceEnvironment make_instance_environment(const EnvConfig& cfg, RngStream& theta_rng,
                                                     RngStream& action_rng, RngStream& noise_rng,
                                                     int index = 1) {
    InstanceEnvironment env;
    env.instance = sample_instance(cfg, theta_rng, index);
    env.action_sets.reserve(cfg.horizon);
    env.noise.resize(cfg.horizon);
    for (int t = 0; t < cfg.horizon; ++t) {
        env.action_sets.push_back(sample_action_set(cfg, action_rng));
        env.noise(t) = cfg.noise_sigma * noise_rng.normal();
    }
    return env;
}

/// Environment for (run, instance) under a master seed; independent of any algorithm.
inline InstanceEnvironment make_instance_environment(const EnvConfig& cfg, std::uint64_t master_seed,
                                                     std::uint64_t run, int index) {
    auto theta_rng = RngStream::keyed({master_seed, run, static_cast<std::uint64_t>(index), kThetaStream});
    auto action_rng = RngStream::keyed({master_seed, run, static_cast<std::uint64_t>(index), kActionStream});
    auto noise_rng = RngStream::keyed({master_seed, run, static_cast<std::uint64_t>(index), kNoiseStream});
    return make_instance_environment(cfg, theta_rng, action_rng, noise_rng, index);
}

}  // namespace mqb
