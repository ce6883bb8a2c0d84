#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hevi/mesh.hpp"
#include "hevi/thermo.hpp"

// The energetically balanced HEVI time step on the x-z slice:
//
//   Step 1  explicit horizontal momentum (leapfrog, Euler at startup)
//   Step 2  implicit vertical solve including the horizontal divergence of
//           the time-integrated horizontal mass and temperature fluxes
//   Step 3  explicit horizontal momentum from the same time-integrated fluxes
//
// Dotting Step 2 with (W, Phi, Pi) and Step 3 with V cancels every forcing
// term pairwise; the remaining energy drift equals the horizontal mismatch
// V^T M (v' - v^{n+1}) up to solver tolerance.

namespace hevi {

struct StateVector {
  std::vector<double> v;              // UPar coefficients, m/s
  std::vector<double> w;              // UPerp coefficients, m/s (walls zero)
  std::vector<double> rho;            // Q coefficients, kg/m^3
  std::vector<double> theta_density;  // Q coefficients of Theta = rho theta
  double t = 0.0;
};

struct FluxSet {
  std::vector<double> V;    // UPar: time integral of the horizontal mass flux
  std::vector<double> W;    // UPerp
  std::vector<double> Phi;  // Q: time integral of the Bernoulli function
  std::vector<double> Pi;   // Q: time integral of the Exner function
};

struct StepReport {
  int picard_iterations = 0;
  double implicit_residual = 0.0;       // relative inter-iterate change at exit
  double energy_balance_residual = 0.0; // quadrilinear sum of Eq-level exchanges
  double horizontal_error = 0.0;        // V^T M (v' - v^{n+1})
  double dH = 0.0;
  double p2k = 0.0;  // potential-to-kinetic power, g z^T M_Q E_perp W-bar
  double i2k = 0.0;  // internal-to-kinetic power, Pi-bar paired with the Theta-flux divergence
};

struct SchemeOptions {
  bool upwind = false;
  double upwind_fraction = 0.5;
  double viscosity = 0.0;  // biharmonic coefficient, m^4/s
  double picard_tol = 1e-12;
  int picard_max_iter = 100;
  bool column_mode = false;   // v forced to zero, horizontal steps skipped
  bool step1_euler = true;    // forward-Euler provisional velocity every step;
                              // false = leapfrog after an Euler first step
};

enum class HorizontalMode { Leapfrog, Euler };

class HeviStepper {
 public:
  HeviStepper(const MeshComplex& mesh, PhysConstants constants, SchemeOptions opts);

  const MeshComplex& mesh() const { return mesh_; }
  const PhysConstants& constants() const { return constants_; }
  const SchemeOptions& options() const { return opts_; }

  std::vector<double> step1_horizontal(const StateVector* prev, const StateVector& cur, double dt,
                                       HorizontalMode mode) const;

  // Simpson-exact time integrals of the variational derivatives between the
  // endpoint states (1/3-1/6 weighted rho-mass averages, six-term kinetic
  // average, trapezoidal Exner).
  FluxSet flux_time_averages(std::span<const double> v_n, std::span<const double> v_prime,
                             std::span<const double> w_n, std::span<const double> w_np1,
                             std::span<const double> rho_n_at_quad,
                             std::span<const double> rho_np1_at_quad,
                             std::span<const double> pi_n, std::span<const double> pi_np1) const;

  struct VerticalResult {
    std::vector<double> w, rho, theta_density;
    FluxSet fluxes;
    std::vector<double> q_half_at_quad;
    std::vector<double> theta_half_at_quad;
    int picard_iterations = 0;
    double implicit_residual = 0.0;
  };
  // Picard iteration, each pass one linear banded solve per vertical column.
  VerticalResult solve_vertical_implicit(const StateVector& cur, std::span<const double> v_prime,
                                         double dt) const;

  std::vector<double> step3_horizontal(const StateVector& cur, const FluxSet& fluxes,
                                       std::span<const double> q_half_at_quad,
                                       std::span<const double> theta_half_at_quad, double dt) const;

  // -nu (weak horizontal Laplacian)^2 v
  std::vector<double> biharmonic_tendency(std::span<const double> v, double coeff) const;

  struct BalanceParts {
    double vertical_part = 0.0;     // W^T M dw + Phi^T M drho + Pi^T M dTheta + V^T M dv
    double horizontal_error = 0.0;  // V^T M (v' - v^{n+1})
  };
  BalanceParts energy_balance(const StateVector& before, const StateVector& after,
                              std::span<const double> v_prime, const FluxSet& fluxes) const;

  // One full HEVI step; prev == nullptr selects the startup Euler step.
  StepReport step(const StateVector* prev, StateVector& state, double dt) const;

  EnergyBreakdown energy(const StateVector& s) const;

  // theta diagnosed with the configured upwinding (dt enters the downwind shift)
  ThetaDiagnosis theta_of(const StateVector& s, double dt) const;

 private:
  struct Level;  // per-time-level derived quantities

  Level make_level(std::span<const double> v, std::span<const double> w, std::span<const double> rho,
                   std::span<const double> theta_density, double dt) const;

  const MeshComplex& mesh_;
  PhysConstants constants_;
  SchemeOptions opts_;
  double w_coeff_floor_;  // coefficient norm of a 1e-12 m/s uniform w field
};

// --- initial states --------------------------------------------------------

struct BalancedState {
  std::vector<double> rho, theta_density, pi;  // Q coefficients
};

// Solves the discrete hydrostatic balance (the w-equation rows at rest) for
// the Exner projection, inverts the projected equation of state for Theta,
// and closes rho so the diagnosed potential temperature matches theta0.
BalancedState hydrostatic_balance(const MeshComplex& mesh, const PhysConstants& c, double theta0,
                                  const SchemeOptions& opts, double dt);

struct BubbleParams {
  double theta0 = 300.0;  // K
  double dtheta = 0.5;    // K
  double radius = 250.0;  // m
  double x_c = 500.0;     // m
  double z_c = 350.0;     // m
};

StateVector bubble_state(const MeshComplex& mesh, const PhysConstants& c, const BubbleParams& bp,
                         const SchemeOptions& opts, double dt);

// x-uniform column with a vertical cosine Theta perturbation of relative
// amplitude `amplitude` centred mid-domain.
StateVector column_state(const MeshComplex& mesh, const PhysConstants& c, double theta0,
                         double amplitude, const SchemeOptions& opts, double dt);

// --- simulation driver ------------------------------------------------------

struct RunParams {
  int nx = 12, nz = 18, p = 3;
  double Lx = 1000.0, Lz = 1500.0;
  double dt = 0.05, t_end = 200.0;
  PhysConstants constants;
  SchemeOptions scheme;
  BubbleParams bubble;
  bool column_mode = false;
  double column_perturb = 1e-3;
  double theta0 = 300.0;
  int snapshot_every = 0;  // steps between theta snapshots; 0 disables
  std::string out_dir;     // empty disables file output
};

struct StepDiagnostics {
  double t = 0.0;
  double kinetic = 0.0, potential = 0.0, internal = 0.0, total = 0.0;
  double dH = 0.0;                 // change from the initial energy
  double dH_step = 0.0;            // change over the last step
  double balance_residual = 0.0;
  double entropy = 0.0;
  double p2k = 0.0, i2k = 0.0;     // power exchanges
  double theta_max = 0.0;
  double centroid_z = 0.0;         // height of the positive theta anomaly
  int picard_iterations = 0;
  double implicit_residual = 0.0;
  double horizontal_error = 0.0;
};

struct RunResult {
  StateVector final_state;
  std::vector<StepDiagnostics> series;
};

using StepObserver = std::function<void(const StepDiagnostics&, const StateVector&)>;

RunResult run_simulation(const RunParams& params, const StepObserver& observer = {});

}  // namespace hevi
