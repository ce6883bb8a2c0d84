#pragma once

#include <stdexcept>
#include <string>

namespace hevi {

// Error taxonomy mirrored by the CLI exit codes: config errors exit 1,
// numeric/domain errors exit 2, invariant failures exit 3.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Singular matrices, non-convergence, eigensolver failures.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Thermodynamically inadmissible states (rho <= 0, Theta <= 0 at quadrature).
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hevi
