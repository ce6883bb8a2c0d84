#pragma once

#include <span>
#include <vector>

#include "hevi/mesh.hpp"

// Equation of state, variational derivatives of the Hamiltonian, total
// energy decomposition, the potential-temperature diagnostic (optionally
// with energetically consistent vertical upwinding of the test functions)
// and the entropy monitor.

namespace hevi {

struct PhysConstants {
  double cp = 1004.5;   // J/(kg K)
  double cv = 717.5;    // J/(kg K)
  double R = 287.0;     // J/(kg K), must equal cp - cv
  double p0 = 1.0e5;    // Pa
  double g = 9.80616;   // m/s^2

  bool operator==(const PhysConstants&) const = default;
  void validate() const;
};

struct EnergyBreakdown {
  double kinetic = 0.0;
  double potential = 0.0;
  double internal = 0.0;
  double total() const { return kinetic + potential + internal; }
};

// L2 projection into Q of the pointwise Exner function
// Pi = cp (R Theta / p0)^(R/cv). Theta must be positive at quadrature points.
std::vector<double> exner(const MeshComplex& mesh, std::span<const double> theta_density_q,
                          const PhysConstants& c);

// Pointwise Exner values at the model quadrature points.
std::vector<double> exner_pointwise(const MeshComplex& mesh, std::span<const double> theta_density_q,
                                    const PhysConstants& c);

// L2 projection into Q of the Bernoulli function 0.5 (v^2 + w^2) + g z.
std::vector<double> bernoulli(const MeshComplex& mesh, std::span<const double> v,
                              std::span<const double> w, double g);

// K, P, I by quadrature of 0.5 rho u.u, rho g z and (cv/cp) Theta Pi.
// With over_integrate the Gauss-Legendre diagnostics rule is used instead of
// the model GLL collocation; the scheme's conservation statements hold under
// the model rule.
EnergyBreakdown total_energy(const MeshComplex& mesh, std::span<const double> v,
                             std::span<const double> w, std::span<const double> rho,
                             std::span<const double> theta_density, const PhysConstants& c,
                             bool over_integrate = false);

// First-order downwind-shifted vertical reference coordinate
// zeta_d = zeta + fraction * dt * w_ref(zeta), clamped to [-1, 1]. w_ref_nodal
// holds the local vertical velocity at the element's z-nodes in reference
// units per second (physical w times 2/dz).
double downwind_coord(const NodalBasis& basis, double zeta, std::span<const double> w_ref_nodal,
                      double dt, double fraction);

// Scalar potential temperature space: the vertical-trace scalar profile of
// UPerp (edge in x, nodal in z, same 2/dx form factor). Coefficient layout
// and quadrature evaluation coincide with UPerp.
//
// Diagnoses theta from <beta_u, rho beta> theta = <beta_u, gamma> Theta where
// the test functions beta_u are evaluated at the downwind-shifted vertical
// coordinate when upwind is enabled (the trial side is always static).
struct ThetaDiagnosis {
  std::vector<double> coeffs;     // UPerp-layout scalar coefficients
  std::vector<double> at_quad;    // values at the model quadrature points
};

ThetaDiagnosis diagnose_theta(const MeshComplex& mesh, std::span<const double> rho_q,
                              std::span<const double> theta_density_q, bool upwind,
                              std::span<const double> w_coeffs, double dt,
                              double upwind_fraction = 0.5);

// integral of rho (cp log theta + s0) over the domain
double entropy_diagnostic(const MeshComplex& mesh, std::span<const double> theta_at_quad,
                          std::span<const double> rho_at_quad, const PhysConstants& c, double s0 = 0.0);

}  // namespace hevi
