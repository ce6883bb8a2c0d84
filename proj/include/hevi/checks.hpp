#pragma once

#include <optional>
#include <string>
#include <vector>

// Structural invariant suite behind the `checks` subcommand: incidence
// nilpotency, Galerkin projection orthogonality, flux-average exactness,
// column energy conservation and the skew-symmetric exchange cancellation.

namespace hevi {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // residual or indicator value
  double tolerance = 0.0;  // 0 for boolean checks
};

// tol_override replaces every residual tolerance when set.
std::vector<CheckResult> run_checks(std::optional<double> tol_override = std::nullopt);

}  // namespace hevi
