#include "ksc/environment.hpp"
#include "ksc/errors.hpp"
#include "ksc/ks_dynamics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace ksc {
namespace {

constexpr double kPi = std::numbers::pi;

ActuatorLayout layout(int n, double length) { return ActuatorLayout::equispaced(n, length, 0.4); }

TEST(Action, ClampsToUnitBox) {
    Eigen::VectorXd v(3);
    v << -2.0, 0.3, 5.0;
    const Action a(v);
    EXPECT_EQ(a.values()[0], -1.0);
    EXPECT_EQ(a.values()[1], 0.3);
    EXPECT_EQ(a.values()[2], 1.0);
    v[1] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(Action{v}, std::invalid_argument);
}

TEST(ForcingPhysical, UnitAtCentre) {
    const ActuatorLayout lay = layout(1, 10.0);
    Eigen::VectorXd x(1);
    x << lay.centers[0];
    EXPECT_NEAR(forcing_physical(Action(Eigen::VectorXd::Ones(1)), lay, x)[0], 1.0, 1e-15);
}

TEST(ForcingPhysical, ZeroAction) {
    const ActuatorLayout lay = layout(4, 10.0);
    EXPECT_EQ(forcing_physical(Action::zero(4), lay, uniform_grid(32, 10.0)).norm(), 0.0);
}

TEST(ForcingPhysical, Superposition) {
    const ActuatorLayout lay = layout(2, 10.0);
    const Eigen::VectorXd x = uniform_grid(64, 10.0);
    const Eigen::VectorXd both = forcing_physical(Action(Eigen::Vector2d(1, 1)), lay, x);
    const Eigen::VectorXd first = forcing_physical(Action(Eigen::Vector2d(1, 0)), lay, x);
    const Eigen::VectorXd second = forcing_physical(Action(Eigen::Vector2d(0, 1)), lay, x);
    EXPECT_LT((both - first - second).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ForcingPhysical, PeriodicDistance) {
    // Actuator at 0 acts equally at x = d and x = L - d.
    const ActuatorLayout lay = layout(1, 10.0);
    Eigen::VectorXd x(2);
    x << 0.3, 9.7;
    const Eigen::VectorXd f = forcing_physical(Action(Eigen::VectorXd::Ones(1)), lay, x);
    EXPECT_NEAR(f[0], f[1], 1e-14);
    EXPECT_NEAR(f[0], std::exp(-0.09 / 0.32), 1e-14);
}

TEST(ForcingSpectral, ZeroAction) {
    EXPECT_EQ(forcing_spectral(Action::zero(3), layout(3, 10.0), 16, 64).norm(), 0.0);
}

TEST(ForcingSpectral, NoTruncationWhenFineEqualsCoarse) {
    const ActuatorLayout lay = layout(4, 12.0);
    Eigen::VectorXd a(4);
    a << 0.5, -1.0, 0.25, 0.75;
    const Action act(a);
    const Eigen::VectorXcd direct =
        to_spectral_grid(forcing_physical(act, lay, uniform_grid(16, 12.0)), 12.0).coeffs;
    EXPECT_LT((forcing_spectral(act, lay, 16, 16) - direct).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(ForcingSpectral, TruncationKeepsLeadingModes) {
    const ActuatorLayout lay = layout(1, 12.0);
    const Action act(Eigen::VectorXd::Ones(1));
    const SpectralState fine = to_spectral_grid(forcing_physical(act, lay, uniform_grid(128, 12.0)), 12.0);
    const Eigen::VectorXcd coarse = forcing_spectral(act, lay, 16, 128);
    ASSERT_EQ(coarse.size(), 9);
    for (int l = 0; l < 8; ++l) EXPECT_LT(std::abs(coarse[l] - fine.coeffs[l] * (16.0 / 128.0)), 1e-14) << l;
    EXPECT_NEAR(coarse[8].real(), fine.coeffs[8].real() * (16.0 / 128.0), 1e-14);
    // The discarded tail carries the rest of the energy.
    EXPECT_GT(fine.coeffs.tail(fine.coeffs.size() - 9).norm(), 0.0);
}

TEST(RhsExplicit, Composition) {
    std::mt19937_64 rng(5);
    const SpectralState zero = SpectralState::zeros(16, 8.0);
    const Eigen::VectorXcd none = Eigen::VectorXcd::Zero(9);
    EXPECT_EQ(ks_rhs_explicit(zero, none).norm(), 0.0);
    const Eigen::VectorXcd f = test::random_state(16, 8.0, rng).coeffs;
    EXPECT_EQ(ks_rhs_explicit(zero, f), f);
    SpectralState single = zero;
    single.coeffs[2] = {0.4, 0.1};
    EXPECT_LT((ks_rhs_explicit(single, none) - nonlinear_term(single)).norm(), 1e-15);
    EXPECT_THROW(ks_rhs_explicit(zero, Eigen::VectorXcd::Zero(5)), std::invalid_argument);
}

TEST(Stepper, ZeroIsAFixedPoint) {
    const KsStepper stepper(64, domain_length(0.08), 0.05);
    SpectralState s = SpectralState::zeros(64, domain_length(0.08));
    for (int k = 0; k < 20; ++k) s = stepper.step(s);
    EXPECT_EQ(s.coeffs.cwiseAbs().maxCoeff(), 0.0);
}

// Local error of one linear-only step against exp(lambda dt) for a single mode.
double linear_local_error(double dt) {
    const double length = 4 * kPi;  // k_1 = 0.5, lambda = k^2 - k^4 = 0.1875
    const double lambda = 0.25 - 0.0625;
    const KsStepper stepper(8, length, dt, StepOptions{.nonlinear = false});
    SpectralState s = SpectralState::zeros(8, length);
    s.coeffs[1] = {1.0, 0.5};
    const SpectralState next = stepper.step(s);
    return std::abs(next.coeffs[1] - s.coeffs[1] * std::exp(lambda * dt));
}

TEST(Stepper, LinearResponseIsFourthOrderLocally) {
    const double e1 = linear_local_error(0.4);
    const double e2 = linear_local_error(0.2);
    const double e3 = linear_local_error(0.1);
    EXPECT_GT(std::log2(e1 / e2), 3.7);
    EXPECT_GT(std::log2(e2 / e3), 3.7);
}

TEST(Stepper, StiffModesDecay) {
    // Large |lambda| dt must be damped, not amplified (L-stability).
    const double length = 2 * kPi;
    const KsStepper stepper(64, length, 0.05, StepOptions{.nonlinear = false});
    SpectralState s = SpectralState::zeros(64, length);
    s.coeffs[30] = 1.0;
    const SpectralState next = stepper.step(s);
    EXPECT_LT(std::abs(next.coeffs[30]), 1e-3);
}

SpectralState integrate(const KsStepper& stepper, SpectralState s, int steps) {
    for (int k = 0; k < steps; ++k) s = stepper.step(s);
    return s;
}

TEST(Stepper, SelfConvergenceOrder) {
    const double length = domain_length(0.08);
    const KsEnvironment env({.nu = 0.08, .n_f = 64, .dt = 0.05, .n_fine = 256,
                             .actuators = ActuatorLayout::equispaced(8, length, 0.4)});
    const SpectralState start = env.init(1, 600);
    const SpectralState ref = integrate(KsStepper(64, length, 0.00625), start, 160);
    Eigen::Vector3d log_dt, log_err;
    const double dts[] = {0.05, 0.025, 0.0125};
    for (int i = 0; i < 3; ++i) {
        const SpectralState s = integrate(KsStepper(64, length, dts[i]), start, static_cast<int>(std::lround(1.0 / dts[i])));
        log_dt[i] = std::log(dts[i]);
        log_err[i] = std::log((s.coeffs - ref.coeffs).norm() / ref.coeffs.norm());
    }
    const double mx = log_dt.mean();
    const double my = log_err.mean();
    const double slope = ((log_dt.array() - mx) * (log_err.array() - my)).sum() / (log_dt.array() - mx).square().sum();
    EXPECT_GE(slope, 2.7);
}

TEST(Stepper, PreservesHermitianStructure) {
    std::mt19937_64 rng(8);
    const KsStepper stepper(16, 9.0, 0.05);
    SpectralState s = test::random_state(16, 9.0, rng, 0.5);
    Eigen::VectorXcd f = test::random_state(16, 9.0, rng, 0.2).coeffs;
    for (int k = 0; k < 50; ++k) s = stepper.step(s, f);
    EXPECT_EQ(s.coeffs[0].imag(), 0.0);
    EXPECT_EQ(s.coeffs[8].imag(), 0.0);
    EXPECT_NO_THROW(validate(s));
}

TEST(Stepper, RejectsMismatchedState) {
    const KsStepper stepper(16, 9.0, 0.05);
    EXPECT_THROW(stepper.step(SpectralState::zeros(8, 9.0)), std::invalid_argument);
    EXPECT_THROW(stepper.step(SpectralState::zeros(16, 4.0)), std::invalid_argument);
    EXPECT_THROW(KsStepper(16, 9.0, 0.0), std::invalid_argument);
}

TEST(Stepper, DivergenceNamesMode) {
    const KsStepper stepper(16, 9.0, 0.05);
    SpectralState s = SpectralState::zeros(16, 9.0);
    s.coeffs[3] = {std::numeric_limits<double>::infinity(), 0.0};
    try {
        stepper.step(s);
        FAIL() << "expected a divergence error";
    } catch (const DivergenceError& e) {
        EXPECT_GE(e.mode(), 0);
        EXPECT_LE(e.mode(), 8);
    }
}

TEST(Stepper, ConvenienceStepMatchesStepper) {
    std::mt19937_64 rng(9);
    const double length = 12.0;
    const ActuatorLayout lay = layout(4, length);
    const SpectralState s = test::random_state(16, length, rng, 0.5);
    Eigen::VectorXd a(4);
    a << 0.1, -0.2, 0.3, 1.0;
    const SpectralState one = imex_rk3_step(s, Action(a), lay, 0.05, 64);
    const SpectralState two = KsStepper(16, length, 0.05).step(s, forcing_spectral(Action(a), lay, 16, 64));
    EXPECT_EQ(one.coeffs, two.coeffs);
}

}  // namespace
}  // namespace ksc
