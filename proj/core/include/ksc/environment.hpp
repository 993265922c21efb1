#pragma once

#include "ksc/ks_dynamics.hpp"
#include "ksc/spectral.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace ksc {

/// L = 2 pi / sqrt(nu)
double domain_length(double nu);

struct SensorLayout {
    Eigen::VectorXd locations;
    double noise_level = 0.0;  // sigma_o, fraction of max |M(s)|

    static SensorLayout equispaced(int count, double length, double noise_level);
    Eigen::Index size() const { return locations.size(); }
};

void validate(const SensorLayout& sensors, double length);

struct Observation {
    Eigen::VectorXd values;
    long time_index = 0;
};

struct EnvironmentSettings {
    double nu = 0.08;
    int n_f = 64;
    double dt = 0.05;
    int n_fine = 256;
    ActuatorLayout actuators;
};

/// The high-fidelity KS truth of the twin experiment.
class KsEnvironment {
public:
    explicit KsEnvironment(EnvironmentSettings settings);

    const EnvironmentSettings& settings() const noexcept { return settings_; }
    double length() const noexcept { return settings_.actuators.length; }
    const KsStepper& stepper() const noexcept { return stepper_; }

    /// Small seeded zero-mean random field integrated unactuated for `spinup_steps`.
    SpectralState init(std::uint64_t seed, int spinup_steps) const;

    SpectralState step(const SpectralState& state, const Action& action) const;
    /// Step with a spectral forcing already resolved for this discretization.
    SpectralState step_forced(const SpectralState& state, const Eigen::VectorXcd& forcing) const;
    Eigen::VectorXcd forcing(const Action& action) const;

private:
    EnvironmentSettings settings_;
    KsStepper stepper_;
};

/// o = u(x_o) + eps, eps ~ N(0, (sigma_o max|u(x_o)|)^2 I), redrawn per call.
Observation observe(const SpectralState& state, const SensorLayout& sensors, std::mt19937_64& rng,
                    long time_index = 0);

/// -( ||u||_2 / sqrt(n) + lambda_a ||a||_2 ) for u sampled on an n-point grid.
double reward(const Eigen::VectorXd& grid_values, const Action& action, double action_penalty);

/// reward() with u evaluated on the state's own n_f grid.
double true_reward(const SpectralState& next_state, const Action& action, double action_penalty);

}  // namespace ksc
