#pragma once

#include "ksc/environment.hpp"
#include "ksc/ks_dynamics.hpp"
#include "ksc/spectral.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace ksc {

struct FourierEnsemble {
    std::vector<SpectralState> members;

    int n_f() const { return members.empty() ? 0 : members.front().n_f; }
    std::size_t size() const { return members.size(); }
};

/// Real and imaginary parts sampled independently per mode:
/// Re c_j ~ N(Re c0, sigma0^2 |Re c0|), Im c_j ~ N(Im c0, sigma0^2 |Im c0|).
FourierEnsemble init_ensemble(const SpectralState& center, double sigma0, int members,
                              std::mt19937_64& rng);

/// Keeps modes 0..n_f/2 of a finer state and rescales them by n_f / n_source, so
/// the low-mode content of the represented field is unchanged.
SpectralState truncate(const SpectralState& state, int n_f);

/// Noise-free series evaluation of a member at the sensor locations.
Eigen::VectorXd model_observe(const SpectralState& member, const SensorLayout& sensors);

SpectralState ensemble_mean(const FourierEnsemble& ensemble);

/// Mean physical field of the ensemble on the fixed `grid_points`-point RL grid.
Eigen::VectorXd rl_state(const FourierEnsemble& ensemble, int grid_points = 64);

/// Split re/im coordinates used by the filter: [Re c_0..c_{n/2}, Im c_0..c_{n/2}].
Eigen::VectorXd to_real_vector(const SpectralState& state);
SpectralState from_real_vector(const Eigen::VectorXd& v, int n_f, double length);

struct ForecastReport {
    int reset_members = 0;
};

/// Truncated-mode KS surrogate sharing the environment's actuators.
class FourierModel {
public:
    FourierModel(int n_f, double length, double dt, ActuatorLayout actuators, int n_fine);

    const KsStepper& stepper() const noexcept { return stepper_; }
    int n_f() const noexcept { return stepper_.n_f(); }
    Eigen::VectorXcd forcing(const Action& action) const;

    /// Advances every member one step under the same forcing. Members that diverge
    /// are reset to the mean of the survivors; if none survive, throws
    /// EnsembleCollapseError.
    ForecastReport forecast(FourierEnsemble& ensemble, const Eigen::VectorXcd& forcing, int workers = 1) const;

private:
    KsStepper stepper_;
    ActuatorLayout actuators_;
    int n_fine_;
};

}  // namespace ksc
