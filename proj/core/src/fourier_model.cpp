#include "ksc/fourier_model.hpp"

#include "ksc/errors.hpp"
#include "ksc/parallel.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace ksc {

FourierEnsemble init_ensemble(const SpectralState& center, double sigma0, int members,
                              std::mt19937_64& rng) {
    validate(center);
    if (members < 2) throw std::invalid_argument("an ensemble needs at least 2 members");
    if (!(sigma0 > 0.0)) throw std::invalid_argument("initial uncertainty sigma0 must be positive");
    std::normal_distribution<double> normal(0.0, 1.0);
    FourierEnsemble ensemble;
    ensemble.members.reserve(members);
    for (int j = 0; j < members; ++j) {
        SpectralState member = center;
        for (Eigen::Index l = 0; l < member.coeffs.size(); ++l) {
            const std::complex<double> c = center.coeffs[l];
            const double re = c.real() + sigma0 * std::sqrt(std::abs(c.real())) * normal(rng);
            const double im = c.imag() + sigma0 * std::sqrt(std::abs(c.imag())) * normal(rng);
            member.coeffs[l] = {re, im};
        }
        enforce_hermitian(member);
        ensemble.members.push_back(std::move(member));
    }
    return ensemble;
}

SpectralState truncate(const SpectralState& state, int n_f) {
    validate(state);
    if (n_f > state.n_f) throw std::invalid_argument("truncation cannot add modes");
    SpectralState out = SpectralState::zeros(n_f, state.length);
    out.coeffs = state.coeffs.head(n_f / 2 + 1) * (static_cast<double>(n_f) / state.n_f);
    enforce_hermitian(out);
    return out;
}

Eigen::VectorXd model_observe(const SpectralState& member, const SensorLayout& sensors) {
    return to_physical(member, sensors.locations).values;
}

SpectralState ensemble_mean(const FourierEnsemble& ensemble) {
    if (ensemble.members.empty()) throw std::invalid_argument("mean of an empty ensemble");
    SpectralState mean = ensemble.members.front();
    for (std::size_t j = 1; j < ensemble.size(); ++j) mean.coeffs += ensemble.members[j].coeffs;
    mean.coeffs /= static_cast<double>(ensemble.size());
    return mean;
}

Eigen::VectorXd rl_state(const FourierEnsemble& ensemble, int grid_points) {
    return to_physical_grid(ensemble_mean(ensemble), grid_points);
}

Eigen::VectorXd to_real_vector(const SpectralState& state) {
    const Eigen::Index modes = state.coeffs.size();
    Eigen::VectorXd v(2 * modes);
    v.head(modes) = state.coeffs.real();
    v.tail(modes) = state.coeffs.imag();
    return v;
}

SpectralState from_real_vector(const Eigen::VectorXd& v, int n_f, double length) {
    const Eigen::Index modes = n_f / 2 + 1;
    if (v.size() != 2 * modes) throw std::invalid_argument("real vector size does not match n_f");
    SpectralState state = SpectralState::zeros(n_f, length);
    for (Eigen::Index l = 0; l < modes; ++l) state.coeffs[l] = {v[l], v[modes + l]};
    enforce_hermitian(state);
    return state;
}

FourierModel::FourierModel(int n_f, double length, double dt, ActuatorLayout actuators, int n_fine)
    : stepper_(n_f, length, dt), actuators_(std::move(actuators)), n_fine_(n_fine) {
    validate(actuators_);
}

Eigen::VectorXcd FourierModel::forcing(const Action& action) const {
    return forcing_spectral(action, actuators_, stepper_.n_f(), n_fine_);
}

ForecastReport FourierModel::forecast(FourierEnsemble& ensemble, const Eigen::VectorXcd& forcing,
                                      int workers) const {
    std::vector<char> diverged(ensemble.size(), 0);
    parallel_for(ensemble.size(), workers, [&](std::size_t j) {
        try {
            ensemble.members[j] = stepper_.step(ensemble.members[j], forcing);
        } catch (const DivergenceError&) {
            diverged[j] = 1;
        }
    });

    ForecastReport report;
    Eigen::VectorXcd survivor_sum = Eigen::VectorXcd::Zero(stepper_.n_f() / 2 + 1);
    int survivors = 0;
    for (std::size_t j = 0; j < ensemble.size(); ++j) {
        if (diverged[j]) continue;
        survivor_sum += ensemble.members[j].coeffs;
        ++survivors;
    }
    if (survivors == 0) throw EnsembleCollapseError("every Fourier ensemble member diverged");
    for (std::size_t j = 0; j < ensemble.size(); ++j) {
        if (!diverged[j]) continue;
        ensemble.members[j].coeffs = survivor_sum / survivors;
        enforce_hermitian(ensemble.members[j]);
        ++report.reset_members;
    }
    if (report.reset_members > 0) {
        std::clog << "[fourier-model] reset " << report.reset_members << " diverged member(s) to the survivor mean\n";
    }
    return report;
}

}  // namespace ksc
