#include "ksc/spectral.hpp"

#include "fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ksc {

namespace {

void check_mode_count(int n_f) {
    if (n_f < 4 || n_f % 2 != 0) {
        throw std::invalid_argument("mode count n_f must be even and >= 4, got " + std::to_string(n_f));
    }
}

void check_length(double length) {
    if (!(length > 0.0) || !std::isfinite(length)) {
        throw std::invalid_argument("domain length must be positive and finite");
    }
}

}  // namespace

SpectralState SpectralState::zeros(int n_f, double length) {
    check_mode_count(n_f);
    check_length(length);
    return SpectralState{Eigen::VectorXcd::Zero(n_f / 2 + 1), n_f, length};
}

bool SpectralState::all_finite() const {
    return coeffs.real().allFinite() && coeffs.imag().allFinite();
}

void validate(const SpectralState& state) {
    check_mode_count(state.n_f);
    check_length(state.length);
    if (state.coeffs.size() != state.n_f / 2 + 1) {
        throw std::invalid_argument("coefficient vector must hold n_f/2+1 modes");
    }
    const double scale = 1.0 + state.coeffs.cwiseAbs().maxCoeff();
    const double tol = 1e-12 * scale;
    if (std::abs(state.coeffs[0].imag()) > tol || std::abs(state.coeffs[state.n_f / 2].imag()) > tol) {
        throw std::invalid_argument("c_0 and the Nyquist coefficient must be real");
    }
}

void enforce_hermitian(SpectralState& state) {
    state.coeffs[0].imag(0.0);
    state.coeffs[state.coeffs.size() - 1].imag(0.0);
}

Eigen::VectorXd wavenumbers(int n_f, double length) {
    check_mode_count(n_f);
    check_length(length);
    const double k1 = 2.0 * std::numbers::pi / length;
    return Eigen::VectorXd::LinSpaced(n_f / 2 + 1, 0.0, n_f / 2) * k1;
}

Eigen::VectorXd uniform_grid(int n, double length) {
    if (n <= 0) throw std::invalid_argument("grid size must be positive");
    check_length(length);
    Eigen::VectorXd x(n);
    for (int j = 0; j < n; ++j) x[j] = j * length / n;
    return x;
}

PhysicalField to_physical(const SpectralState& state, const Eigen::VectorXd& points) {
    validate(state);
    const double k1 = 2.0 * std::numbers::pi / state.length;
    const Eigen::Index modes = state.coeffs.size();
    PhysicalField field{Eigen::VectorXd(points.size()), points};
    for (Eigen::Index p = 0; p < points.size(); ++p) {
        const double x = points[p];
        if (!(x >= 0.0 && x < state.length)) {
            throw std::invalid_argument("evaluation point " + std::to_string(x) + " outside [0, L)");
        }
        double sum = state.coeffs[0].real();
        for (Eigen::Index l = 1; l < modes; ++l) {
            sum += 2.0 * (state.coeffs[l] * std::polar(1.0, k1 * static_cast<double>(l) * x)).real();
        }
        field.values[p] = sum / state.n_f;
    }
    return field;
}

Eigen::VectorXd to_physical_grid(const SpectralState& state, int n_points) {
    validate(state);
    if (n_points < state.n_f || n_points % 2 != 0) {
        throw std::invalid_argument("grid evaluation needs an even point count >= n_f");
    }
    const int half = state.n_f / 2;
    const double inv_n = 1.0 / state.n_f;
    Eigen::VectorXcd spectrum = Eigen::VectorXcd::Zero(n_points);
    spectrum[0] = state.coeffs[0] * inv_n;
    for (int l = 1; l < half; ++l) {
        spectrum[l] = state.coeffs[l] * inv_n;
        spectrum[n_points - l] = std::conj(state.coeffs[l]) * inv_n;
    }
    if (n_points == state.n_f) {
        spectrum[half] = 2.0 * state.coeffs[half] * inv_n;
    } else {
        spectrum[half] = state.coeffs[half] * inv_n;
        spectrum[n_points - half] = std::conj(state.coeffs[half]) * inv_n;
    }
    return detail::fft_inverse(spectrum).real();
}

SpectralState to_spectral(const PhysicalField& field, double length) {
    const auto n = static_cast<int>(field.values.size());
    if (field.points.size() != field.values.size()) {
        throw std::invalid_argument("field values and points differ in length");
    }
    check_mode_count(n);
    check_length(length);
    for (int j = 0; j < n; ++j) {
        if (std::abs(field.points[j] - j * length / n) > 1e-12 * length) {
            throw std::invalid_argument("to_spectral requires the uniform grid (0..n-1) L/n");
        }
    }
    return to_spectral_grid(field.values, length);
}

SpectralState to_spectral_grid(const Eigen::VectorXd& grid_values, double length) {
    const auto n = static_cast<int>(grid_values.size());
    check_mode_count(n);
    check_length(length);
    const Eigen::VectorXcd full = detail::fft_forward(grid_values.cast<std::complex<double>>());
    SpectralState state{full.head(n / 2 + 1), n, length};
    state.coeffs[n / 2] *= 0.5;
    enforce_hermitian(state);
    return state;
}

int padded_size(int n_f) {
    // The quadratic product reaches |p+q| <= n_f; aliases stay outside the
    // retained band when the padded size exceeds 3 n_f / 2.
    const int minimal = 3 * n_f / 2 + 1;
    return minimal % 2 == 0 ? minimal : minimal + 1;
}

Eigen::VectorXcd nonlinear_term(const SpectralState& state) {
    validate(state);
    const int n = state.n_f;
    const int padded = padded_size(n);
    const Eigen::VectorXd u = to_physical_grid(state, padded);
    const Eigen::VectorXcd square = detail::fft_forward(u.cwiseAbs2().cast<std::complex<double>>());

    const double k1 = 2.0 * std::numbers::pi / state.length;
    // square_l / padded is the coefficient of u^2 in the sum-over-modes basis; the
    // factor n converts back to the 1/n_f-normalized basis of the state.
    const double scale = static_cast<double>(n) / padded;
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n / 2 + 1);
    const std::complex<double> minus_half_i(0.0, -0.5);
    for (int l = 1; l < n / 2; ++l) {
        out[l] = minus_half_i * (k1 * l) * square[l] * scale;
    }
    return out;
}

Eigen::VectorXd energy_spectrum(std::span<const SpectralState> trajectory, std::size_t window) {
    if (trajectory.empty()) throw std::invalid_argument("energy spectrum of an empty trajectory");
    if (window == 0 || window > trajectory.size()) {
        throw std::invalid_argument("energy spectrum window must be in [1, trajectory length]");
    }
    const int n = trajectory.front().n_f;
    Eigen::VectorXd energy = Eigen::VectorXd::Zero(n / 2 - 1);
    for (std::size_t k = trajectory.size() - window; k < trajectory.size(); ++k) {
        const auto& c = trajectory[k].coeffs;
        if (trajectory[k].n_f != n) throw std::invalid_argument("trajectory mixes mode counts");
        energy += c.segment(1, n / 2 - 1).cwiseAbs2();
    }
    return energy / static_cast<double>(window);
}

double rms(const SpectralState& state) {
    const auto& c = state.coeffs;
    const int half = state.n_f / 2;
    double sum = c[0].real() * c[0].real() + 4.0 * std::norm(c[half]);
    for (int l = 1; l < half; ++l) sum += 2.0 * std::norm(c[l]);
    // sum_j u_j^2 = sum / n_f, mean over n_f points.
    return std::sqrt(sum) / state.n_f;
}

}  // namespace ksc
