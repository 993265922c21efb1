#pragma once

#include <stdexcept>
#include <string>

namespace ksc {

/// A time step produced NaN/Inf. `mode()` is the first non-finite Fourier mode,
/// or -1 when the offending quantity is not a spectral coefficient.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int mode)
        : std::runtime_error(what), mode_(mode) {}
    int mode() const noexcept { return mode_; }

private:
    int mode_;
};

/// Every ensemble member diverged, so there is nothing left to reset from.
class EnsembleCollapseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file on disk has the wrong magic, version or shape.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ksc
