#pragma once

// Closed-form constants of the single-instance and N-instance relative-regret bounds.
// They are reported as diagnostics; nothing in the simulation depends on them except
// the optional theory-mode number of exploration instances.

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace mqb {

struct BoundParams {
    // inputs
    double delta = 0.0;
    double f_m = 0.0;
    double f_s = 0.0;
    double tau = 0.0;
    double d = 0.0;
    double T = 0.0;
    double N = 0.0;
    double a = 0.0;
    double m_bound = 0.0;
    double sigma = 0.0;
    double lambda_min_prior = 0.0;   // lower bound on eig(Sigma*)
    double lambda_max_prior = 0.0;   // upper bound on eig(Sigma*)
    double lambda_bar_action = 0.0;  // lower bound on eig of the action covariance

    // outputs
    double c_s = 0.0;
    double c_xi = 0.0;
    double c_1 = 0.0;
    double c_bad = 0.0;
    double M = 0.0;
    double k1 = 0.0;
    double k2 = 0.0;
    double N0 = 0.0;
    double c_w = 0.0;
};

/// 2 sigma^2 / (lambda_bar_action d) + lambda_max_prior, the scale shared by c_w, f_m and f_s.
inline double estimation_scale(double sigma, double lambda_bar_action, double d, double lambda_max_prior) {
    return 2.0 * sigma * sigma / (lambda_bar_action * d) + lambda_max_prior;
}

/// Widening constant c_w = 50 (2 sigma^2 / (lambda_bar_action d) + lambda_max_prior).
inline double theory_widening_constant(double sigma, double lambda_bar_action, double d, double lambda_max_prior) {
    return 50.0 * estimation_scale(sigma, lambda_bar_action, d, lambda_max_prior);
}

struct EventScales {
    double f_m;
    double f_s;
    double delta;  // 1 / (n - 1)
};

/// Mean/covariance deviation scales met by the meta-learner before instance n (n >= 2).
inline EventScales meta_event_scales(const BoundParams& p, double n) {
    if (!(n >= 2.0)) throw InvalidInput("meta_event_scales: n must be at least 2");
    const double q = estimation_scale(p.sigma, p.lambda_bar_action, p.d, p.lambda_max_prior);
    const double log_dnT = std::log(p.d * n * p.T);
    return {3.0 * q * (p.d + log_dnT), 1e4 * q * q * (5.0 * p.d + 2.0 * std::log(p.d * n * p.T)), 1.0 / (n - 1.0)};
}

namespace detail {

struct DeltaConstants {
    double c_s, c_xi, c_1;
};

inline DeltaConstants delta_constants(const BoundParams& p, double delta) {
    const double lam = p.lambda_min_prior;
    return {2.0 * p.sigma * p.sigma / (lam * lam * p.lambda_bar_action),
            p.sigma * std::sqrt(5.0 * std::log(p.d * p.T / delta)),
            2.0 / lam * std::log(p.d * p.d * p.T / delta)};
}

}  // namespace detail

/// Fills every output of p. The N-instance constants (k2, N0) use delta = 1/N;
/// the single-instance ones use p.delta.
inline BoundParams bound_constants(BoundParams p) {
    if (!(p.delta > 0.0 && p.delta < std::exp(-1.0)))
        throw InvalidInput("bound_constants: delta must lie in (0, 1/e)");
    for (double v : {p.f_m, p.f_s, p.tau, p.d, p.T, p.N, p.a, p.sigma, p.lambda_min_prior, p.lambda_max_prior,
                     p.lambda_bar_action})
        if (!(v > 0.0)) throw InvalidInput("bound_constants: inputs must be positive");
    if (!(p.m_bound >= 0.0)) throw InvalidInput("bound_constants: m_bound must be non-negative");

    const auto [c_s, c_xi, c_1] = detail::delta_constants(p, p.delta);
    const double xi2_s = c_xi * c_xi * c_s;
    p.c_s = c_s;
    p.c_xi = c_xi;
    p.c_1 = c_1;
    p.c_bad = 22.0 * p.a * (p.m_bound + std::sqrt(4.0 * p.lambda_max_prior * std::log(p.d * p.d * p.T / p.delta)));
    p.M = std::max({3.0, c_s * c_s * p.tau * p.tau * p.f_s,
                    18.0 * xi2_s * (p.f_m + (c_1 * p.d + xi2_s / 36.0) * p.f_s)});
    p.k1 = 12.0 * std::sqrt(xi2_s) * std::sqrt(p.f_m * p.delta) +
           (c_s * p.tau + 12.0 * std::sqrt(xi2_s * c_1 * p.d) + 2.0 * xi2_s) * std::sqrt(p.f_s * p.delta);

    const double q = estimation_scale(p.sigma, p.lambda_bar_action, p.d, p.lambda_max_prior);
    p.c_w = 50.0 * q;
    const auto [cs_n, cxi_n, c1_n] = detail::delta_constants(p, 1.0 / p.N);
    const double xi2_s_n = cxi_n * cxi_n * cs_n;
    const double log_dNT = std::log(p.d * p.N * p.T);
    const double log_dN1T = std::log(p.d * (p.N + 1.0) * p.T);
    p.k2 = 24.0 * std::sqrt(xi2_s_n) * std::sqrt(3.0 * q) * std::sqrt(p.d + log_dNT) +
           4.0 * p.c_w * (cs_n * p.tau + 12.0 * std::sqrt(xi2_s_n * c1_n * p.d) + 2.0 * xi2_s_n) *
               std::sqrt(5.0 * p.d + 2.0 * log_dNT);
    const double wide = 5.0 * p.d + 2.0 * log_dN1T;
    p.N0 = std::max({3.0, 4.0 * p.c_w * p.c_w * cs_n * cs_n * p.tau * p.tau * wide,
                     18.0 * xi2_s_n *
                         (3.0 * q * (p.d + log_dN1T) + 4.0 * p.c_w * p.c_w * (c1_n * p.d + xi2_s_n / 36.0) * wide)});
    return p;
}

}  // namespace mqb
