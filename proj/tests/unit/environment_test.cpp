#include "ksc/environment.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace ksc {
namespace {

KsEnvironment make_env(double nu, int n_a = 8) {
    const double length = domain_length(nu);
    return KsEnvironment({.nu = nu, .n_f = 64, .dt = 0.05, .n_fine = 256,
                          .actuators = ActuatorLayout::equispaced(n_a, length, 0.4)});
}

TEST(Environment, DomainLength) {
    EXPECT_NEAR(domain_length(1.0), 2 * std::numbers::pi, 1e-15);
    EXPECT_NEAR(domain_length(0.08), 22.2144, 1e-4);
    EXPECT_THROW(domain_length(0.0), std::invalid_argument);
}

TEST(Environment, RejectsActuatorsOnOtherDomain) {
    EXPECT_THROW(KsEnvironment({.nu = 0.08, .n_f = 64, .dt = 0.05, .n_fine = 256,
                                .actuators = ActuatorLayout::equispaced(8, 10.0, 0.4)}),
                 std::invalid_argument);
}

TEST(Environment, InitIsDeterministic) {
    const KsEnvironment env = make_env(0.08);
    const SpectralState a = env.init(42, 0);
    const SpectralState b = env.init(42, 0);
    const SpectralState c = env.init(43, 0);
    EXPECT_EQ(a.coeffs, b.coeffs);
    EXPECT_NE(a.coeffs, c.coeffs);
    EXPECT_LT(rms(a), 0.5);
    EXPECT_GT(rms(a), 0.0);
}

TEST(Environment, AttractorAmplitudeBand) {
    const KsEnvironment env = make_env(0.08);
    const double r = rms(env.init(7, 5000));
    EXPECT_GE(r, 0.5);
    EXPECT_LE(r, 3.5);
}

TEST(Environment, StableRegimeDecays) {
    const KsEnvironment env = make_env(1.5, 1);
    EXPECT_LT(rms(env.init(7, 5000)), 1e-3);
}

TEST(Environment, ZeroStaysZero) {
    const KsEnvironment env = make_env(0.08);
    const SpectralState zero = SpectralState::zeros(64, env.length());
    EXPECT_EQ(env.step(zero, Action::zero(8)).coeffs.norm(), 0.0);
}

TEST(Environment, BoundedUnderRandomActuation) {
    const KsEnvironment env = make_env(0.08);
    SpectralState s = env.init(3, 1000);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 500; ++k) {
        Eigen::VectorXd a(8);
        for (auto& v : a) v = u(rng);
        s = env.step(s, Action(a));
    }
    ASSERT_TRUE(s.all_finite());
    EXPECT_LT(to_physical_grid(s, 64).cwiseAbs().maxCoeff(), 10.0);
}

TEST(Observe, NoiseFreeIsSeries) {
    std::mt19937_64 rng(1);
    const SpectralState s = test::random_state(16, 10.0, rng);
    const SensorLayout sensors = SensorLayout::equispaced(5, 10.0, 0.0);
    const Observation o = observe(s, sensors, rng, 17);
    EXPECT_EQ(o.time_index, 17);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(o.values[i], test::series_value(s, sensors.locations[i]), 1e-12);
}

TEST(Observe, ZeroStateGivesZero) {
    std::mt19937_64 rng(1);
    const SpectralState s = SpectralState::zeros(16, 10.0);
    EXPECT_EQ(observe(s, SensorLayout::equispaced(4, 10.0, 0.3), rng).values.norm(), 0.0);
}

TEST(Observe, NoiseStdScalesWithMaxAbs) {
    // Field 1 at x=0 and -2 at x=L/2: cos mode plus constant.
    const double length = 10.0;
    SpectralState s = SpectralState::zeros(8, length);
    s.coeffs[0] = -4.0;  // mean -0.5
    s.coeffs[1] = 6.0;   // 1.5 cos(k x)
    SensorLayout sensors = SensorLayout::equispaced(2, length, 0.1);
    std::mt19937_64 rng(5);
    const int draws = 100000;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
    for (int i = 0; i < draws; ++i) {
        const Eigen::VectorXd o = observe(s, sensors, rng).values;
        sum += o;
        sq += o.cwiseProduct(o);
    }
    const Eigen::Vector2d mean = sum / draws;
    EXPECT_NEAR(mean[0], 1.0, 0.01);
    EXPECT_NEAR(mean[1], -2.0, 0.01);
    for (int i = 0; i < 2; ++i) {
        const double sd = std::sqrt(sq[i] / draws - mean[i] * mean[i]);
        EXPECT_NEAR(sd, 0.2, 0.2 * 0.02);
    }
}

TEST(Sensors, Validation) {
    SensorLayout s = SensorLayout::equispaced(3, 6.0, 0.1);
    EXPECT_NO_THROW(validate(s, 6.0));
    s.locations[2] = 6.5;
    EXPECT_THROW(validate(s, 6.0), std::invalid_argument);
    EXPECT_THROW(SensorLayout::equispaced(3, 6.0, -0.1), std::invalid_argument);
}

TEST(Reward, Examples) {
    EXPECT_EQ(reward(Eigen::VectorXd::Zero(64), Action::zero(8), 0.1), 0.0);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(8);
    a[3] = 1.0;
    EXPECT_NEAR(reward(Eigen::VectorXd::Zero(64), Action(a), 0.1), -0.1, 1e-15);
    EXPECT_NEAR(reward(Eigen::VectorXd::Ones(64), Action::zero(8), 0.1), -1.0, 1e-15);
}

TEST(Reward, TrueRewardUsesOwnGrid) {
    SpectralState s = SpectralState::zeros(64, 5.0);
    s.coeffs[0] = 64.0;
    EXPECT_NEAR(true_reward(s, Action::zero(2), 0.1), -1.0, 1e-14);
}

}  // namespace
}  // namespace ksc
