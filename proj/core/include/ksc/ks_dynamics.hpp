#pragma once

#include "ksc/spectral.hpp"

#include <Eigen/Dense>

namespace ksc {

/// Gaussian actuators centred at `centers` on the periodic domain [0, length).
struct ActuatorLayout {
    Eigen::VectorXd centers;
    double width = 0.4;
    double length = 0.0;

    /// n equispaced actuators at (0, 1, ..., n-1) L/n.
    static ActuatorLayout equispaced(int count, double length, double width);
    Eigen::Index size() const { return centers.size(); }
};

void validate(const ActuatorLayout& layout);

/// Actuation amplitudes, clamped to [-1, 1] on construction.
class Action {
public:
    Action() = default;
    explicit Action(Eigen::VectorXd values);
    static Action zero(Eigen::Index n) { return Action(Eigen::VectorXd::Zero(n)); }

    const Eigen::VectorXd& values() const noexcept { return values_; }
    Eigen::Index size() const noexcept { return values_.size(); }

private:
    Eigen::VectorXd values_;
};

/// f(x) = sum_i a_i exp(-d(x, x_i)^2 / (2 sigma^2)), d the periodic distance.
Eigen::VectorXd forcing_physical(const Action& action, const ActuatorLayout& layout,
                                 const Eigen::VectorXd& points);

/// Forcing resolved on the n_fine grid, transformed, and truncated to the n_f/2+1
/// retained modes (rescaled to the 1/n_f normalization).
Eigen::VectorXcd forcing_spectral(const Action& action, const ActuatorLayout& layout, int n_f,
                                  int n_fine);

/// Explicit part of the spectral KS right-hand side: nonlinear advection + forcing.
Eigen::VectorXcd ks_rhs_explicit(const SpectralState& state, const Eigen::VectorXcd& forcing);

struct StepOptions {
    bool nonlinear = true;
};

// Third-order IMEX Runge-Kutta for dc/dt = L c + N(c) + f with the diagonal linear
// operator L_l = k_l^2 - k_l^4 treated implicitly and N + f explicitly. Tableau:
// ARK3(2)4L[2]SA of Kennedy & Carpenter (L-stable, stiffly accurate, stage order 2),
// so every implicit stage solve is a scalar division per mode.
class KsStepper {
public:
    KsStepper(int n_f, double length, double dt, StepOptions options = {});

    int n_f() const noexcept { return n_f_; }
    double length() const noexcept { return length_; }
    double dt() const noexcept { return dt_; }

    /// One step with the spectral forcing held constant (zero-order hold). Throws
    /// DivergenceError naming the first non-finite mode.
    SpectralState step(const SpectralState& state, const Eigen::VectorXcd& forcing) const;
    SpectralState step(const SpectralState& state) const;

private:
    int n_f_;
    double length_;
    double dt_;
    StepOptions options_;
    Eigen::VectorXd linear_;          // k^2 - k^4
    Eigen::VectorXd implicit_factor_;  // 1 / (1 - dt gamma L)
};

/// Convenience single step: forcing from `action` resolved on an n_fine grid.
SpectralState imex_rk3_step(const SpectralState& state, const Action& action,
                            const ActuatorLayout& layout, double dt, int n_fine);

}  // namespace ksc
