#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>

namespace ksc {

// Fourier representation of a real periodic field on [0, L).
//
// Only the non-redundant modes l = 0..n_f/2 are stored. The field is
//
//   u(x) = 1/n_f * ( c_0 + sum_{l=1}^{n_f/2} [c_l exp(i k_l x) + c.c.] ),   k_l = 2 pi l / L
//
// i.e. the conjugate pair is added for every mode except l = 0, including the
// Nyquist mode. With this convention c_l for l < n_f/2 is the unnormalized DFT of
// the grid samples and c_{n_f/2} is half the DFT Nyquist bin (the Nyquist energy
// is split between +n_f/2 and -n_f/2). Both c_0 and c_{n_f/2} are real.
//
// Parseval on the n_f-point grid:
//   sum_j u_j^2 = 1/n_f * ( c_0^2 + 2 sum_{l=1}^{n_f/2-1} |c_l|^2 + 4 c_{n_f/2}^2 ).
struct SpectralState {
    Eigen::VectorXcd coeffs;
    int n_f = 0;
    double length = 0.0;

    static SpectralState zeros(int n_f, double length);

    Eigen::Index mode_count() const { return coeffs.size(); }
    bool all_finite() const;
};

struct PhysicalField {
    Eigen::VectorXd values;
    Eigen::VectorXd points;
};

/// Throws std::invalid_argument if n_f is odd or < 4, L <= 0, the coefficient
/// count is not n_f/2+1, or c_0 / c_{n_f/2} carry an imaginary part.
void validate(const SpectralState& state);

/// Zeroes the imaginary part of c_0 and c_{n_f/2}.
void enforce_hermitian(SpectralState& state);

Eigen::VectorXd wavenumbers(int n_f, double length);

/// (0, 1, ..., n-1) * L / n
Eigen::VectorXd uniform_grid(int n, double length);

/// Exact series evaluation at arbitrary points in [0, L).
PhysicalField to_physical(const SpectralState& state, const Eigen::VectorXd& points);

/// Evaluation on the uniform n_points grid through an inverse FFT. n_points must be
/// even and >= n_f (trigonometric upsampling when larger).
Eigen::VectorXd to_physical_grid(const SpectralState& state, int n_points);

/// Forward transform of a field sampled on the uniform grid (0..n-1) L/n.
SpectralState to_spectral(const PhysicalField& field, double length);
SpectralState to_spectral_grid(const Eigen::VectorXd& grid_values, double length);

/// Size of the zero-padded grid used for the dealiased quadratic product.
int padded_size(int n_f);

/// -(1/2) i k_l (1/n_f) sum_{p+q=l} c_p c_q for l = 0..n_f/2-1, evaluated with a
/// zero-padded pseudo-spectral product. The Nyquist entry is zero: the derivative
/// of the real Nyquist cosine has no real Nyquist component.
Eigen::VectorXcd nonlinear_term(const SpectralState& state);

/// Per-mode mean of |c_l|^2 over the last `window` states, for l = 1..n_f/2-1.
Eigen::VectorXd energy_spectrum(std::span<const SpectralState> trajectory, std::size_t window);

/// sqrt(mean u^2) on the state's own n_f grid, computed from the coefficients.
double rms(const SpectralState& state);

}  // namespace ksc
