#pragma once

// Randomized property suites behind the `verify` subcommand and the acceptance binary.
// Each suite returns rows of (check_name, statistic, threshold, pass).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "bandit_env.hpp"
#include "bound_constants.hpp"
#include "errors.hpp"
#include "gaussian_belief.hpp"
#include "meta_prior.hpp"
#include "psd_linalg.hpp"
#include "rng.hpp"
#include "theory_checks.hpp"

namespace mqb {

struct CheckRow {
    std::string name;
    double statistic = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

/// Case counts and Monte Carlo sizes; defaults are the acceptance sizes.
struct SuiteSizes {
    int posterior_cases = 1000;
    int alignment_cases = 1000;
    int noise_cases = 500;
    int jacobian_cases = 200;
    long estimator_trials = 20000;
    long theta_event_trials = 100000;
    long gram_event_trials = 5000;

    static SuiteSizes quick() {
        SuiteSizes s;
        s.posterior_cases = 200;
        s.alignment_cases = 200;
        s.noise_cases = 100;
        s.jacobian_cases = 40;
        s.estimator_trials = 10000;
        s.theta_event_trials = 20000;
        s.gram_event_trials = 1000;
        return s;
    }
};

namespace detail {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, RngStream& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
}

inline Vector random_vector(Eigen::Index d, RngStream& rng, double scale = 1.0) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = scale * rng.normal();
    return v;
}

/// Q diag(eigs) Q^T with eigenvalues uniform in [lo, hi] and Haar-ish Q.
inline PsdMatrix random_pd(Eigen::Index d, double lo, double hi, RngStream& rng) {
    Eigen::HouseholderQR<Matrix> qr(random_matrix(d, d, rng));
    const Matrix q = qr.householderQ();
    Vector ev(d);
    for (Eigen::Index i = 0; i < d; ++i) ev(i) = lo + (hi - lo) * rng.uniform();
    return PsdMatrix::trusted(q * ev.asDiagonal() * q.transpose());
}

inline int uniform_int(int lo, int hi, RngStream& rng) {
    return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
}

/// Sigma* and Sigma_hat = Sigma* + (random PSD of random rank).
struct CovPair {
    PsdMatrix star;
    PsdMatrix hat;
};

inline CovPair random_cov_pair(Eigen::Index d, RngStream& rng) {
    CovPair p;
    p.star = random_pd(d, 0.3, 2.0, rng);
    const Matrix r = random_matrix(d, uniform_int(1, static_cast<int>(d), rng), rng);
    p.hat = PsdMatrix::trusted(p.star.matrix() + 0.3 * rng.uniform() * r * r.transpose());
    return p;
}

inline CheckRow at_most(std::string name, double stat, double threshold) {
    return {std::move(name), stat, threshold, stat <= threshold};
}

}  // namespace detail

/// Incremental conjugate updates against the batch closed form.
inline std::vector<CheckRow> posterior_suite(const SuiteSizes& sz, std::uint64_t seed) {
    auto rng = RngStream::keyed({seed, label_key("verify-posterior")});
    double worst = 0.0;
    for (int c = 0; c < sz.posterior_cases; ++c) {
        const int d = detail::uniform_int(1, 8, rng);
        const int t = detail::uniform_int(0, 50, rng);
        const double sigma = 0.2 + 1.8 * rng.uniform();
        const Vector mean = detail::random_vector(d, rng, 2.0);
        const PsdMatrix cov = detail::random_pd(d, 0.2, 3.0, rng);
        const Matrix actions = detail::random_matrix(t, d, rng);
        const Vector rewards = detail::random_vector(t, rng, 2.0);
        GaussianBelief inc = GaussianBelief::from_prior(mean, cov);
        for (int s = 0; s < t; ++s) inc = update(inc, actions.row(s).transpose(), rewards(s), sigma);
        const GaussianBelief batch = batch_posterior(mean, cov, actions, rewards, sigma);
        worst = std::max({worst, (inc.mean() - batch.mean()).cwiseAbs().maxCoeff(),
                          (inc.cov().matrix() - batch.cov().matrix()).cwiseAbs().maxCoeff()});
    }
    return {detail::at_most("posterior.incremental_vs_batch_max_abs", worst, 1e-8)};
}

/// Covariance alignment, density ratio and mean (noise) alignment.
inline std::vector<CheckRow> alignment_suite(const SuiteSizes& sz, std::uint64_t seed) {
    auto rng = RngStream::keyed({seed, label_key("verify-alignment")});
    double gram_gap = 0.0, row_excess = -1.0, ratio_max = 0.0, trace_gap = 0.0, roundtrip = 0.0, b_bound = -1.0;
    for (int c = 0; c < sz.alignment_cases; ++c) {
        const int d = detail::uniform_int(1, 5, rng);
        const int tau = detail::uniform_int(d, d + 15, rng);
        const double sigma = 0.3 + 1.2 * rng.uniform();
        const auto [star, hat] = detail::random_cov_pair(d, rng);
        const PsdMatrix b = compute_B(hat, star, sigma);
        Matrix am = detail::random_matrix(tau, d, rng);
        // Rescale so that V_m - B is comfortably positive definite.
        const double need = 2.0 * op_norm(b) + 0.1;
        const double lo = min_eig(SymMatrix(am.transpose() * am));
        if (lo < need) am *= std::sqrt(need / lo);
        const Matrix ak = align_actions(am, b);
        const Matrix vm = am.transpose() * am;
        gram_gap = std::max(gram_gap, op_norm(SymMatrix(ak.transpose() * ak - (vm - b.matrix()))));
        for (Eigen::Index t = 0; t < tau; ++t)
            row_excess = std::max(row_excess, ak.row(t).norm() - am.row(t).norm());
        const Matrix back = unalign_actions(ak, b);
        roundtrip = std::max(roundtrip, op_norm(SymMatrix(back.transpose() * back - vm)) / (1.0 + op_norm(SymMatrix(vm))));

        const PsdMatrix action_cov = detail::random_pd(d, 0.5, 2.0, rng);
        const double ratio = gaussian_density_ratio(am, ak, action_cov);
        const double closed = std::exp(-0.5 * (pd_inverse(action_cov).matrix() * b.matrix()).trace());
        ratio_max = std::max(ratio_max, ratio);
        trace_gap = std::max(trace_gap, std::abs(ratio - closed));

        const double lam = min_eig(star);
        const double bound = sigma * sigma / (lam * lam) * op_norm(SymMatrix(hat.matrix() - star.matrix()));
        b_bound = std::max(b_bound, op_norm(b) - bound * (1.0 + 1e-10));
    }

    // Mean alignment: the misspecified posterior after aligned actions and the same noise
    // equals the true-prior posterior after the aligned noise sum.
    double mean_gap = 0.0, cov_gap = 0.0;
    for (int c = 0; c < sz.noise_cases; ++c) {
        const int d = detail::uniform_int(1, 5, rng);
        const int tau = detail::uniform_int(d, d + 15, rng);
        const double sigma = 0.3 + 1.2 * rng.uniform();
        const auto [star, hat] = detail::random_cov_pair(d, rng);
        const PsdMatrix b = compute_B(hat, star, sigma);
        const Vector mu_star = detail::random_vector(d, rng);
        const Vector mu_hat = mu_star + detail::random_vector(d, rng, 0.3);
        const Vector theta = detail::random_vector(d, rng);
        Matrix ak = detail::random_matrix(tau, d, rng);
        const double lo = min_eig(SymMatrix(ak.transpose() * ak));
        if (lo < 0.5) ak *= std::sqrt(0.5 / lo);
        const Vector xi = detail::random_vector(tau, rng, sigma);
        const Matrix am = unalign_actions(ak, b);
        const GaussianBelief qb = batch_posterior(mu_hat, hat, am, am * theta + xi, sigma);

        const PsdMatrix vk = PsdMatrix::trusted(ak.transpose() * ak);
        const Vector g = compute_G(mu_hat, mu_star, theta, hat, b, sigma);
        const Vector sk = align_noise(ak.transpose() * xi, vk, b, g);
        const Matrix prec = pd_inverse(star).matrix() + vk.matrix() / (sigma * sigma);
        const Matrix kcov = prec.llt().solve(Matrix::Identity(d, d));
        const Vector kmean =
            kcov * (pd_inverse(star).matrix() * mu_star + (vk.matrix() * theta + sk) / (sigma * sigma));
        mean_gap = std::max(mean_gap, (qb.mean() - kmean).cwiseAbs().maxCoeff());
        cov_gap = std::max(cov_gap, (qb.cov().matrix() - kcov).cwiseAbs().maxCoeff());
    }

    return {detail::at_most("alignment.gram_residual_op", gram_gap, 1e-9),
            detail::at_most("alignment.row_norm_excess", row_excess, 1e-12),
            detail::at_most("alignment.gram_roundtrip_rel", roundtrip, 1e-8),
            detail::at_most("alignment.density_ratio_max", ratio_max, 1.0 + 1e-10),
            detail::at_most("alignment.density_ratio_trace_gap", trace_gap, 1e-9),
            detail::at_most("alignment.B_norm_bound_excess", b_bound, 0.0),
            detail::at_most("alignment.noise_posterior_mean_gap", mean_gap, 1e-8),
            detail::at_most("alignment.noise_posterior_cov_gap", cov_gap, 1e-8)};
}

/// Finite-difference Jacobian determinant against its closed-form bound.
inline std::vector<CheckRow> jacobian_suite(const SuiteSizes& sz, std::uint64_t seed) {
    auto rng = RngStream::keyed({seed, label_key("verify-jacobian")});
    int checked = 0, failures = 0, attempts = 0;
    double worst = 0.0;
    while (checked < sz.jacobian_cases && attempts < 100 * sz.jacobian_cases) {
        ++attempts;
        const int n = detail::uniform_int(3, 5, rng);
        const Matrix x = detail::random_matrix(n, 2, rng);
        const double lo = min_eig(SymMatrix(x.transpose() * x));
        const Matrix r = detail::random_matrix(2, detail::uniform_int(1, 2, rng), rng);
        Matrix b = r * r.transpose();
        b *= 0.95 * rng.uniform() * lo / std::max(op_norm(SymMatrix(b)), 1e-300);
        const JacobianCheck jc = jacobian_bound_check(x, PsdMatrix::trusted(b));
        if (jc.skipped) continue;
        ++checked;
        if (!jc.ok) ++failures;
        worst = std::max(worst, jc.numeric_inv_absdet / jc.bound);
    }
    Matrix hand(2, 1);
    hand << 1.0, 1.0;
    const JacobianCheck jh = jacobian_bound_check(hand, PsdMatrix::trusted(Matrix::Constant(1, 1, 0.5)));
    return {detail::at_most("jacobian.max_ratio_to_bound", worst, 1.0 + 1e-3),
            detail::at_most("jacobian.failed_cases", failures, 0.0),
            detail::at_most("jacobian.cases_short", static_cast<double>(sz.jacobian_cases - checked), 0.0),
            detail::at_most("jacobian.hand_case_inv_det_gap", std::abs(jh.numeric_inv_absdet - 1.0), 1e-6),
            detail::at_most("jacobian.hand_case_bound_gap", std::abs(jh.bound - 4.0 / 3.0), 1e-12)};
}

/// Probe environment for the estimator checks: d = 3, mu* = (2,2,2), unit-diagonal
/// Sigma* with 0.8 correlation, radius-1 ball actions, unit noise.
inline EnvConfig estimator_probe_env() {
    EnvConfig cfg;
    cfg.d = 3;
    cfg.horizon = 20;
    cfg.instances = 1;
    cfg.action_radius = 1.0;
    cfg.noise_sigma = 1.0;
    cfg.prior_mean = Vector::Constant(3, 2.0);
    cfg.prior_cov = equicorrelated(3, 1.0, 0.8);
    fill_tight_bounds(cfg);
    return cfg;
}

inline std::vector<CheckRow> estimators_suite(const SuiteSizes& sz, std::uint64_t seed) {
    auto rng = RngStream::keyed({seed, label_key("verify-estimators")});
    const EnvConfig cfg = estimator_probe_env();
    const auto rep = estimator_bias_probe(cfg, 20, sz.estimator_trials, rng);
    double worst_z = 0.0, worst_rho_z = 0.0;
    for (Eigen::Index i = 0; i < cfg.d; ++i) {
        worst_z = std::max(worst_z, std::abs(rep.theta_hat_bias(i)) / rep.theta_hat_se(i));
        worst_rho_z = std::max(worst_rho_z, std::abs(rep.rho_mean(i)) / rep.rho_se(i));
    }
    return {detail::at_most("estimators.theta_hat_bias_max_z", worst_z, 4.0),
            detail::at_most("estimators.rho_mean_max_z", worst_rho_z, 4.0),
            detail::at_most("estimators.rho_second_moment_rel_gap", rep.rho_moment_gap / rep.rho_moment_ref, 0.05),
            detail::at_most("estimators.cov_estimate_rel_gap", rep.cov_gap / rep.cov_ref, 0.05)};
}

/// Reference geometry with uniform-ball actions and the theory tau.
inline std::vector<CheckRow> events_suite(const SuiteSizes& sz, std::uint64_t seed) {
    auto rng = RngStream::keyed({seed, label_key("verify-events")});
    EnvConfig cfg = reference_experiment();
    cfg.num_actions.reset();
    const int tau = tau_theory(cfg.d, cfg.action_radius, cfg.lambda_bar_action, cfg.instances, cfg.horizon);
    const auto rep = good_event_probe(cfg, tau, 0.01, sz.theta_event_trials, sz.gram_event_trials, rng);
    return {detail::at_most("events.gram_failures", static_cast<double>(rep.gram_failures), 0.0),
            detail::at_most("events.theta_failure_rate", rep.theta_rate(), rep.slack(rep.theta_trials))};
}

/// Independently evaluated constants for the all-ones input
/// (sigma = lambdas = a = m = f_m = f_s = tau = 1, d = T = 2, N = 1, delta = 0.1).
inline BoundParams all_ones_bound_params() {
    BoundParams p;
    p.delta = 0.1;
    p.f_m = p.f_s = p.tau = 1.0;
    p.d = p.T = 2.0;
    p.N = 1.0;
    p.a = p.m_bound = p.sigma = 1.0;
    p.lambda_min_prior = p.lambda_max_prior = p.lambda_bar_action = 1.0;
    return p;
}

inline BoundParams all_ones_reference() {
    BoundParams r = all_ones_bound_params();
    r.c_s = 2.0;
    r.c_xi = 4.2946940834673756;
    r.c_1 = 8.7640532693477632;
    r.c_bad = 114.10647949372853;
    r.M = 12983.022857510238;
    r.k1 = 143.50376268611095;
    r.c_w = 100.0;
    r.k2 = 227106.83882169896;
    r.N0 = 1229930299.3730491;
    return r;
}

inline std::vector<CheckRow> constants_suite(const SuiteSizes&, std::uint64_t) {
    const BoundParams got = bound_constants(all_ones_bound_params());
    const BoundParams ref = all_ones_reference();
    double worst = 0.0;
    const double pairs[][2] = {{got.c_s, ref.c_s}, {got.c_xi, ref.c_xi}, {got.c_1, ref.c_1}, {got.c_bad, ref.c_bad},
                               {got.M, ref.M},     {got.k1, ref.k1},     {got.c_w, ref.c_w}, {got.k2, ref.k2},
                               {got.N0, ref.N0}};
    for (const auto& pr : pairs) worst = std::max(worst, std::abs(pr[0] - pr[1]) / std::abs(pr[1]));

    // N0 is M evaluated with delta = 1/N and the f-scales of instance N + 1.
    BoundParams q = all_ones_bound_params();
    q.N = 5.0;
    q.delta = 1.0 / q.N;
    const EventScales ev = meta_event_scales(q, q.N + 1.0);
    q.f_m = ev.f_m;
    q.f_s = ev.f_s;
    const BoundParams two = bound_constants(q);
    const double route_gap = std::abs(two.N0 - two.M) / two.M;

    BoundParams s = all_ones_bound_params();
    s.sigma = 2.0;
    const BoundParams scaled = bound_constants(s);
    const double homog = std::max(std::abs(scaled.c_s / got.c_s - 4.0), std::abs(scaled.c_xi / got.c_xi - 2.0));

    return {detail::at_most("constants.all_ones_max_rel_err", worst, 1e-12),
            detail::at_most("constants.N0_equals_M_rel_gap", route_gap, 1e-12),
            detail::at_most("constants.sigma_scaling_gap", homog, 1e-12)};
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"posterior", "alignment", "jacobian", "estimators", "events",
                                                "constants"};
    return names;
}

/// Runs one named suite, or every suite for "all".
inline std::vector<CheckRow> run_suite(const std::string& name, const SuiteSizes& sz, std::uint64_t seed) {
    if (name == "all") {
        std::vector<CheckRow> out;
        for (const auto& n : suite_names()) {
            auto rows = run_suite(n, sz, seed);
            out.insert(out.end(), rows.begin(), rows.end());
        }
        return out;
    }
    if (name == "posterior") return posterior_suite(sz, seed);
    if (name == "alignment") return alignment_suite(sz, seed);
    if (name == "jacobian") return jacobian_suite(sz, seed);
    if (name == "estimators") return estimators_suite(sz, seed);
    if (name == "events") return events_suite(sz, seed);
    if (name == "constants") return constants_suite(sz, seed);
    throw InvalidInput("unknown suite '" + name + "'");
}

inline void print_checks(const std::vector<CheckRow>& rows, std::ostream& os) {
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-4s %-44s %14.6g <= %-12.6g\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                      r.statistic, r.threshold);
        os << buf;
    }
}

inline void write_checks_csv(const std::vector<CheckRow>& rows, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    char buf[64];
    f << "check_name,statistic,threshold,pass\n";
    for (const auto& r : rows) {
        f << r.name << ',';
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,", r.statistic, r.threshold);
        f << buf << (r.pass ? 1 : 0) << '\n';
    }
    if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace mqb
