#include <gtest/gtest.h>

#include "mqb/bandit_env.hpp"

using namespace mqb;

namespace {

EnvConfig small_env() {
    EnvConfig cfg;
    cfg.d = 2;
    cfg.horizon = 4;
    cfg.instances = 3;
    cfg.num_actions = 3;
    cfg.action_radius = 1.0;
    cfg.noise_sigma = 0.5;
    cfg.prior_mean = Vector::Constant(2, 1.0);
    cfg.prior_cov = PsdMatrix::identity(2);
    fill_tight_bounds(cfg);
    return cfg;
}

std::string config_error(const EnvConfig& cfg) {
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(EnvConfig, ReferenceExperimentBounds) {
    const auto cfg = reference_experiment();
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_NEAR(cfg.lambda_max_prior, 4.2, 1e-12);
    EXPECT_NEAR(cfg.lambda_min_prior, 0.2, 1e-12);
    EXPECT_DOUBLE_EQ(cfg.lambda_bar_action, 0.0625 / 7.0);
    EXPECT_NEAR(cfg.m_bound, std::sqrt(20.0), 1e-12);
}

TEST(EnvConfig, ValidationNamesTheKey) {
    auto cfg = small_env();
    cfg.horizon = 0;
    EXPECT_EQ(config_error(cfg).rfind("env.horizon", 0), 0u);

    cfg = small_env();
    cfg.prior_mean = Vector::Zero(3);
    EXPECT_EQ(config_error(cfg).rfind("env.prior_mean", 0), 0u);

    cfg = small_env();
    cfg.lambda_bar_action = 1.0;  // above a^2/(d+2) = 0.25
    EXPECT_EQ(config_error(cfg).rfind("env.lambda_bar_action", 0), 0u);

    cfg = small_env();
    cfg.lambda_max_prior = 0.5;
    EXPECT_EQ(config_error(cfg).rfind("env.lambda_max_prior", 0), 0u);

    cfg = small_env();
    cfg.noise_sigma = -1;
    EXPECT_EQ(config_error(cfg).rfind("env.noise_sigma", 0), 0u);
}

TEST(UniformBall, StaysInsideAndHasBallCovariance) {
    // Oracle: 1e6-sample numpy Monte Carlo gives diag mean 0.0089285 against a^2/(d+2) = 0.0089286.
    RngStream rng(5);
    const int d = 5, n = 200000;
    const double a = 0.25;
    Matrix second = Matrix::Zero(d, d);
    for (int i = 0; i < n; ++i) {
        const Vector x = uniform_ball(d, a, rng);
        ASSERT_LE(x.norm(), a * (1 + 1e-15));
        second += x * x.transpose();
    }
    second /= n;
    const double target = ball_action_eigenvalue(d, a);
    EXPECT_LT((second - target * Matrix::Identity(d, d)).cwiseAbs().maxCoeff() / target, 0.03);
}

TEST(BestAction, LowestIndexWinsTies) {
    ActionSet s;
    s.actions.resize(3, 2);
    s.actions << 1, 0, 0, 1, 1, 0;
    Vector v(2);
    v << 1, 1;
    EXPECT_EQ(best_action(v, s).index, 0u);
    v << 0, 2;
    EXPECT_EQ(best_action(v, s).index, 1u);
}

TEST(BestAction, BallPointsAlongVector) {
    ActionSet s;
    s.ball = true;
    s.radius = 2.0;
    Vector v(2);
    v << 3, 4;
    const auto c = best_action(v, s);
    EXPECT_NEAR(c.action(0), 1.2, 1e-15);
    EXPECT_NEAR(c.action(1), 1.6, 1e-15);
    EXPECT_NEAR(oracle_value(v, s), 10.0, 1e-14);
    EXPECT_TRUE(best_action(Vector::Zero(2), s).action.isZero(0.0));
}

TEST(BestAction, EmptySetThrows) {
    ActionSet s;
    EXPECT_THROW(best_action(Vector::Ones(2), s), InvalidInput);
}

TEST(Reward, IsLinearPlusNoise) {
    RngStream rng(1);
    Vector th(2), a(2);
    th << 1, 2;
    a << 3, -1;
    const auto r = reward(th, a, 0.0, rng);
    EXPECT_EQ(r.x, 1.0);
    EXPECT_EQ(r.xi, 0.0);
    const auto r2 = reward(th, a, 2.0, rng);
    EXPECT_DOUBLE_EQ(r2.x, 1.0 + r2.xi);
    EXPECT_THROW(reward(th, Vector::Ones(3), 1.0, rng), InvalidInput);
}

TEST(InstanceEnvironment, KeyedByRunAndInstanceOnly) {
    const auto cfg = small_env();
    const auto a = make_instance_environment(cfg, 42, 0, 1);
    const auto b = make_instance_environment(cfg, 42, 0, 1);
    const auto c = make_instance_environment(cfg, 42, 0, 2);
    const auto r = make_instance_environment(cfg, 42, 1, 1);
    EXPECT_EQ(a.instance.theta, b.instance.theta);
    EXPECT_EQ(a.noise, b.noise);
    EXPECT_EQ(a.action_sets[3].actions, b.action_sets[3].actions);
    EXPECT_NE(a.instance.theta, c.instance.theta);
    EXPECT_NE(a.instance.theta, r.instance.theta);
    EXPECT_EQ(a.horizon(), 4);
    EXPECT_EQ(a.action_sets[0].size(), 3);
}

TEST(InstanceEnvironment, BallSetsCarryNoActions) {
    auto cfg = small_env();
    cfg.num_actions.reset();
    const auto env = make_instance_environment(cfg, 1, 0, 1);
    EXPECT_TRUE(env.action_sets[0].ball);
    EXPECT_EQ(env.action_sets[0].radius, 1.0);
}
