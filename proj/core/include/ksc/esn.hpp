#pragma once

#include "ksc/environment.hpp"
#include "ksc/ks_dynamics.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <vector>

namespace ksc {

/// Hyperparameters of the control-aware echo state network.
struct EsnParams {
    int reservoir_size = 1000;     // n_h
    double connectivity = 3.0;     // mean nonzeros per row of W
    double leak_rate = 0.23;       // alpha in (0, 1]
    double spectral_radius = 0.07;  // rho
    double input_scaling = 0.23;   // xi_u
    double action_scaling = 0.51;  // xi_a
    double tikhonov = 1e-6;        // lambda
    std::uint64_t seed = 0;
};

void validate(const EsnParams& params);

using SparseMatrixRM = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Reservoir h(k+1) = (1 - alpha) h(k) + alpha tanh(W_in y~(k) + W h(k) + b),
// readout u^(k+1) = W_out [h(k+1); 1], with augmented input
// y~ = [(u - U_mean) ./ U_std ; a].
//
// W_in and W are regenerated from the seed; only the readout and the input
// normalization are trained.
class EsnMachine {
public:
    /// Builds W_in (one U(-1,1) entry per row, scaled by xi_u or xi_a by column),
    /// W = rho * W~ with W~ Erdos-Renyi (mean row degree n_conn, U(-1,1) entries)
    /// rescaled to unit spectral radius, and b ~ U(-1,1). Deterministic in the seed.
    static EsnMachine generate(const EsnParams& params, int n_u, int n_a);

    const EsnParams& params() const noexcept { return params_; }
    int n_u() const noexcept { return n_u_; }
    int n_a() const noexcept { return n_a_; }
    int reservoir_size() const noexcept { return params_.reservoir_size; }

    const SparseMatrixRM& input_weights() const noexcept { return input_weights_; }
    const SparseMatrixRM& reservoir_weights() const noexcept { return reservoir_weights_; }
    const Eigen::VectorXd& bias() const noexcept { return bias_; }
    const Eigen::MatrixXd& readout_weights() const noexcept { return readout_; }
    const Eigen::VectorXd& input_mean() const noexcept { return input_mean_; }
    const Eigen::VectorXd& input_std() const noexcept { return input_std_; }
    bool trained() const noexcept { return readout_.size() > 0; }

    /// Components of `std_dev` below 1e-8 are replaced by 1 (with a warning).
    void set_normalization(Eigen::VectorXd mean, Eigen::VectorXd std_dev);
    void set_readout(Eigen::MatrixXd weights);

    /// Test hooks: override the generated matrices.
    void set_input_weights(SparseMatrixRM w) { input_weights_ = std::move(w); }
    void set_reservoir_weights(SparseMatrixRM w) { reservoir_weights_ = std::move(w); }
    void set_bias(Eigen::VectorXd b) { bias_ = std::move(b); }

private:
    EsnParams params_;
    int n_u_ = 0;
    int n_a_ = 0;
    SparseMatrixRM input_weights_;
    SparseMatrixRM reservoir_weights_;
    Eigen::VectorXd bias_;
    Eigen::MatrixXd readout_;
    Eigen::VectorXd input_mean_;
    Eigen::VectorXd input_std_;
};

/// Largest eigenvalue modulus of a square sparse matrix (dense eigen-solve).
double spectral_radius(const SparseMatrixRM& matrix);

Eigen::VectorXd augment_input(const Eigen::VectorXd& u, const Action& action, const EsnMachine& machine);
Eigen::VectorXd augment_input(const Eigen::VectorXd& u, const Eigen::VectorXd& action, const EsnMachine& machine);

Eigen::VectorXd esn_step(const Eigen::VectorXd& h, const Eigen::VectorXd& augmented, const EsnMachine& machine,
                         double leak_rate);
inline Eigen::VectorXd esn_step(const Eigen::VectorXd& h, const Eigen::VectorXd& augmented,
                                const EsnMachine& machine) {
    return esn_step(h, augmented, machine, machine.params().leak_rate);
}

/// W_out [h; 1]
Eigen::VectorXd readout(const Eigen::VectorXd& h, const EsnMachine& machine);

/// Teacher-forced run: column k of `inputs`/`actions` drives step k. Returns
/// h0 followed by the N updated states.
std::vector<Eigen::VectorXd> run_open_loop(const EsnMachine& machine, const Eigen::VectorXd& h0,
                                           const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& actions);

/// Autonomous run: each step feeds back the previous readout together with
/// action column k. Returns the n_steps predictions as columns.
Eigen::MatrixXd run_closed_loop(const EsnMachine& machine, const Eigen::VectorXd& h0, const Eigen::MatrixXd& actions,
                                int n_steps);

/// Ridge readout W_out = Y H~^T (H~ H~^T + lambda I)^-1 with H~ = [H; 1^T].
Eigen::MatrixXd train_readout(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets, double tikhonov);

/// Streams blocks of (H, Y) into the normal equations so long datasets never
/// need the full state history in memory.
class RidgeAccumulator {
public:
    RidgeAccumulator(int reservoir_size, int n_u);
    void add(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets);
    Eigen::MatrixXd solve(double tikhonov) const;
    long samples() const noexcept { return samples_; }

private:
    Eigen::MatrixXd gram_;   // H~ H~^T
    Eigen::MatrixXd cross_;  // H~ Y^T
    long samples_ = 0;
};

/// Feeds each column of `samples` repeatedly for `washout` open-loop steps from
/// h = 0 under a fixed action. Returns one reservoir state per column.
Eigen::MatrixXd washout_init_ensemble(const EsnMachine& machine, const Eigen::MatrixXd& samples, const Action& action,
                                      int washout = 100);

/// Readout on the uniform n_u-point grid, interpolated spectrally to the sensors.
Eigen::VectorXd esn_observe(const Eigen::VectorXd& h, const EsnMachine& machine, const SensorLayout& sensors,
                            double length);

/// Reservoir ensemble (one member per column) driven by a shared action.
struct EsnEnsemble {
    Eigen::MatrixXd states;  // n_h x m

    Eigen::Index size() const { return states.cols(); }
};

/// Readouts of every member, n_u x m.
Eigen::MatrixXd ensemble_readout(const EsnEnsemble& ensemble, const EsnMachine& machine);

/// One closed-loop step of every member: input is the member's own readout.
void esn_forecast(EsnEnsemble& ensemble, const EsnMachine& machine, const Action& action);

/// Predicted observations of every member at the sensors, n_o x m.
Eigen::MatrixXd esn_ensemble_observe(const EsnEnsemble& ensemble, const EsnMachine& machine,
                                     const SensorLayout& sensors, double length);

/// Mean readout of the ensemble on the n_u-point grid.
Eigen::VectorXd esn_rl_state(const EsnEnsemble& ensemble, const EsnMachine& machine);

}  // namespace ksc
