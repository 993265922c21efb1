#include "ksc/ks_dynamics.hpp"

#include "ksc/errors.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ksc {

ActuatorLayout ActuatorLayout::equispaced(int count, double length, double width) {
    ActuatorLayout layout{uniform_grid(count, length), width, length};
    validate(layout);
    return layout;
}

void validate(const ActuatorLayout& layout) {
    if (!(layout.length > 0.0)) throw std::invalid_argument("actuator layout needs a positive domain length");
    if (!(layout.width > 0.0)) throw std::invalid_argument("actuator width must be positive");
    for (Eigen::Index i = 0; i < layout.centers.size(); ++i) {
        const double x = layout.centers[i];
        if (!(x >= 0.0 && x < layout.length)) throw std::invalid_argument("actuator centre outside [0, L)");
        if (i > 0 && !(x > layout.centers[i - 1])) {
            throw std::invalid_argument("actuator centres must be strictly increasing");
        }
    }
}

Action::Action(Eigen::VectorXd values) : values_(std::move(values)) {
    if (!values_.allFinite()) throw std::invalid_argument("action contains non-finite values");
    values_ = values_.cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::VectorXd forcing_physical(const Action& action, const ActuatorLayout& layout,
                                 const Eigen::VectorXd& points) {
    if (action.size() != layout.size()) {
        throw std::invalid_argument("action size does not match the actuator count");
    }
    const double inv_two_var = 1.0 / (2.0 * layout.width * layout.width);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(points.size());
    for (Eigen::Index i = 0; i < layout.size(); ++i) {
        const double a = action.values()[i];
        if (a == 0.0) continue;
        for (Eigen::Index p = 0; p < points.size(); ++p) {
            double d = std::abs(points[p] - layout.centers[i]);
            d = std::min(d, layout.length - d);
            f[p] += a * std::exp(-d * d * inv_two_var);
        }
    }
    return f;
}

Eigen::VectorXcd forcing_spectral(const Action& action, const ActuatorLayout& layout, int n_f,
                                  int n_fine) {
    if (n_fine < n_f || n_fine % 2 != 0 || n_f % 2 != 0) {
        throw std::invalid_argument("forcing resolution n_fine must be even and >= n_f");
    }
    const Eigen::VectorXd fine = forcing_physical(action, layout, uniform_grid(n_fine, layout.length));
    const SpectralState fine_state = to_spectral_grid(fine, layout.length);
    Eigen::VectorXcd out = fine_state.coeffs.head(n_f / 2 + 1) * (static_cast<double>(n_f) / n_fine);
    if (n_fine > n_f) {
        // Fine-grid mode n_f/2 is an ordinary complex mode; only its cosine part is
        // representable by the real coarse Nyquist coefficient.
        out[n_f / 2].imag(0.0);
    }
    out[0].imag(0.0);
    return out;
}

Eigen::VectorXcd ks_rhs_explicit(const SpectralState& state, const Eigen::VectorXcd& forcing) {
    if (forcing.size() != state.coeffs.size()) {
        throw std::invalid_argument("forcing and state mode counts differ");
    }
    return nonlinear_term(state) + forcing;
}

namespace {

// ARK3(2)4L[2]SA of Kennedy & Carpenter (2003): ESDIRK implicit part with an
// explicit first stage, L-stable, stiffly accurate, stage order 2. Explicit and
// implicit parts share the abscissae c = (0, 2g, 3/5, 1) and the weights b, which
// equal the last implicit row.
constexpr int kStages = 4;
constexpr double kGamma = 1767732205903.0 / 4055673282236.0;

constexpr double kImplicit[kStages][kStages] = {
    {0.0, 0.0, 0.0, 0.0},
    {kGamma, kGamma, 0.0, 0.0},
    {2746238789719.0 / 10658868560708.0, -640167445237.0 / 6845629431997.0, kGamma, 0.0},
    {1471266399579.0 / 7840856788654.0, -4482444167858.0 / 7529755066697.0,
     11266239266428.0 / 11593286722821.0, kGamma},
};

constexpr double kExplicit[kStages][kStages] = {
    {0.0, 0.0, 0.0, 0.0},
    {1767732205903.0 / 2027836641118.0, 0.0, 0.0, 0.0},
    {5535828885825.0 / 10492691773637.0, 788022342437.0 / 10882634858940.0, 0.0, 0.0},
    {6485989280629.0 / 16251701735622.0, -4246266847089.0 / 9704473918619.0,
     10755448449292.0 / 10357097424841.0, 0.0},
};

}  // namespace

KsStepper::KsStepper(int n_f, double length, double dt, StepOptions options)
    : n_f_(n_f), length_(length), dt_(dt), options_(options) {
    if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
    const Eigen::VectorXd k = wavenumbers(n_f, length);
    linear_ = k.array().square() - k.array().pow(4);
    implicit_factor_ = (1.0 - dt * kGamma * linear_.array()).inverse();
}

SpectralState KsStepper::step(const SpectralState& state) const {
    return step(state, Eigen::VectorXcd::Zero(state.coeffs.size()));
}

SpectralState KsStepper::step(const SpectralState& state, const Eigen::VectorXcd& forcing) const {
    if (state.n_f != n_f_ || state.length != length_) {
        throw std::invalid_argument("state does not match the stepper discretization");
    }
    if (forcing.size() != state.coeffs.size()) {
        throw std::invalid_argument("forcing and state mode counts differ");
    }
    const Eigen::ArrayXcd lin = linear_.cast<std::complex<double>>().array();
    const Eigen::ArrayXcd factor = implicit_factor_.cast<std::complex<double>>().array();
    const Eigen::VectorXcd& c = state.coeffs;
    const double h = dt_;

    // Stage values Y_i solve (1 - h g L) Y_i = c + h sum_{j<i} (aE_ij N_j + aI_ij L Y_j).
    std::array<Eigen::VectorXcd, kStages> explicit_terms;
    std::array<Eigen::VectorXcd, kStages> linear_terms;
    for (int i = 0; i < kStages; ++i) {
        Eigen::VectorXcd stage;
        if (i == 0) {
            stage = c;
        } else {
            Eigen::VectorXcd rhs = c;
            for (int j = 0; j < i; ++j) {
                rhs += h * (kExplicit[i][j] * explicit_terms[j] + kImplicit[i][j] * linear_terms[j]);
            }
            stage = (rhs.array() * factor).matrix();
        }
        explicit_terms[i] = options_.nonlinear
                                ? Eigen::VectorXcd(nonlinear_term(SpectralState{stage, n_f_, length_}) + forcing)
                                : forcing;
        linear_terms[i] = (lin * stage.array()).matrix();
    }

    SpectralState next{c, n_f_, length_};
    for (int j = 0; j < kStages; ++j) {
        next.coeffs += h * kImplicit[kStages - 1][j] * (explicit_terms[j] + linear_terms[j]);
    }
    for (Eigen::Index l = 0; l < next.coeffs.size(); ++l) {
        if (!std::isfinite(next.coeffs[l].real()) || !std::isfinite(next.coeffs[l].imag())) {
            throw DivergenceError("KS step diverged at Fourier mode " + std::to_string(l),
                                  static_cast<int>(l));
        }
    }
    enforce_hermitian(next);
    return next;
}

SpectralState imex_rk3_step(const SpectralState& state, const Action& action,
                            const ActuatorLayout& layout, double dt, int n_fine) {
    const KsStepper stepper(state.n_f, state.length, dt);
    return stepper.step(state, forcing_spectral(action, layout, state.n_f, n_fine));
}

}  // namespace ksc
