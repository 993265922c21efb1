#include "ksc/environment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ksc {

double domain_length(double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("viscosity parameter nu must be positive");
    return 2.0 * std::numbers::pi / std::sqrt(nu);
}

SensorLayout SensorLayout::equispaced(int count, double length, double noise_level) {
    SensorLayout sensors{uniform_grid(count, length), noise_level};
    validate(sensors, length);
    return sensors;
}

void validate(const SensorLayout& sensors, double length) {
    if (!(sensors.noise_level >= 0.0)) throw std::invalid_argument("sensor noise level must be >= 0");
    for (Eigen::Index i = 0; i < sensors.locations.size(); ++i) {
        const double x = sensors.locations[i];
        if (!(x >= 0.0 && x < length)) throw std::invalid_argument("sensor location outside [0, L)");
        if (i > 0 && !(x > sensors.locations[i - 1])) {
            throw std::invalid_argument("sensor locations must be strictly increasing");
        }
    }
}

KsEnvironment::KsEnvironment(EnvironmentSettings settings)
    : settings_(std::move(settings)),
      stepper_(settings_.n_f, domain_length(settings_.nu), settings_.dt) {
    validate(settings_.actuators);
    if (std::abs(settings_.actuators.length - stepper_.length()) > 1e-12 * stepper_.length()) {
        throw std::invalid_argument("actuator layout domain length does not match nu");
    }
}

SpectralState KsEnvironment::init(std::uint64_t seed, int spinup_steps) const {
    if (spinup_steps < 0) throw std::invalid_argument("spin-up step count must be >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.1);
    Eigen::VectorXd u(settings_.n_f);
    for (auto& v : u) v = normal(rng);
    SpectralState state = to_spectral_grid(u, length());
    // The mean is conserved by the dynamics, so start from a zero-mean field.
    state.coeffs[0] = 0.0;
    for (int k = 0; k < spinup_steps; ++k) state = stepper_.step(state);
    return state;
}

Eigen::VectorXcd KsEnvironment::forcing(const Action& action) const {
    return forcing_spectral(action, settings_.actuators, settings_.n_f, settings_.n_fine);
}

SpectralState KsEnvironment::step(const SpectralState& state, const Action& action) const {
    return stepper_.step(state, forcing(action));
}

SpectralState KsEnvironment::step_forced(const SpectralState& state, const Eigen::VectorXcd& forcing) const {
    return stepper_.step(state, forcing);
}

Observation observe(const SpectralState& state, const SensorLayout& sensors, std::mt19937_64& rng,
                    long time_index) {
    Observation obs{to_physical(state, sensors.locations).values, time_index};
    if (sensors.noise_level > 0.0 && obs.values.size() > 0) {
        const double std_dev = sensors.noise_level * obs.values.cwiseAbs().maxCoeff();
        if (std_dev > 0.0) {
            std::normal_distribution<double> normal(0.0, std_dev);
            for (auto& v : obs.values) v += normal(rng);
        }
    }
    return obs;
}

double reward(const Eigen::VectorXd& grid_values, const Action& action, double action_penalty) {
    const double n = static_cast<double>(grid_values.size());
    return -(grid_values.norm() / std::sqrt(n) + action_penalty * action.values().norm());
}

double true_reward(const SpectralState& next_state, const Action& action, double action_penalty) {
    return reward(to_physical_grid(next_state, next_state.n_f), action, action_penalty);
}

}  // namespace ksc
