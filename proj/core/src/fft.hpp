#pragma once

// Thin wrapper over Eigen's kissfft backend. One plan cache per thread, so the
// transforms are safe to call from ensemble workers.

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

namespace ksc::detail {

inline Eigen::FFT<double>& fft_engine() {
    thread_local Eigen::FFT<double> engine = [] {
        Eigen::FFT<double> e;
        e.SetFlag(Eigen::FFT<double>::Unscaled);
        return e;
    }();
    return engine;
}

/// X_k = sum_j x_j exp(-2 pi i k j / n)
inline Eigen::VectorXcd fft_forward(const Eigen::VectorXcd& x) {
    Eigen::VectorXcd out(x.size());
    fft_engine().fwd(out, x);
    return out;
}

/// x_j = sum_k X_k exp(+2 pi i k j / n), no 1/n factor.
inline Eigen::VectorXcd fft_inverse(const Eigen::VectorXcd& x) {
    Eigen::VectorXcd out(x.size());
    fft_engine().inv(out, x);
    return out;
}

}  // namespace ksc::detail
