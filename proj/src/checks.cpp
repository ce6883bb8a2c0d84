#include "hevi/checks.hpp"

#include <cmath>
#include <random>

#include "hevi/stepper.hpp"

namespace hevi {

namespace {

double galerkin_orthogonality_residual(const MeshComplex& mesh, std::mt19937& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> vx(mesh.quad_count()), vz(mesh.quad_count());
  for (int q = 0; q < mesh.quad_count(); ++q) {
    const double x = mesh.quad_x(q) / mesh.Lx(), z = mesh.quad_z(q) / mesh.Lz();
    vx[q] = std::sin(6.28318 * x) * std::cos(3.0 * z) + 0.3 * dist(rng);
    vz[q] = std::cos(6.28318 * x) * z * (1.0 - z) + 0.3 * dist(rng);
  }
  const std::vector<double> px = mesh.project_div_par(vx);
  const std::vector<double> pz = mesh.project_div_perp(vz);

  // residual of <beta, P[v] - v> per unit rhs magnitude
  std::vector<double> rx = mesh.mass_apply(Space::UPar, px);
  std::vector<double> rz = mesh.mass_apply(Space::UPerp, pz);
  const std::vector<double> bx = mesh.assemble(Space::UPar, vx);
  const std::vector<double> bz = mesh.assemble(Space::UPerp, vz);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    num = std::max(num, std::abs(rx[i] - bx[i]));
    den = std::max(den, std::abs(bx[i]));
  }
  for (size_t i = 0; i < rz.size(); ++i) {
    num = std::max(num, std::abs(rz[i] - bz[i]));
    den = std::max(den, std::abs(bz[i]));
  }
  return num / den;
}

double flux_average_exactness_residual() {
  MeshComplex mesh(4, 4, 3, 1000.0, 1000.0);
  PhysConstants c;
  SchemeOptions opts;
  HeviStepper stepper(mesh, c, opts);

  // rho(t), v(t) linear in t; the 1/3-1/6 weights must reproduce the exact
  // integral of the quadratic product.
  auto rho_field = [&](double t) {
    std::vector<double> vals(mesh.quad_count());
    for (int q = 0; q < mesh.quad_count(); ++q)
      vals[q] = 1.0 + 0.1 * std::sin(6.28318 * mesh.quad_x(q) / mesh.Lx()) +
                t * (0.05 + 0.02 * std::cos(6.28318 * mesh.quad_z(q) / mesh.Lz()));
    return vals;
  };
  auto v_field = [&](double t) {
    std::vector<double> vals(mesh.quad_count());
    for (int q = 0; q < mesh.quad_count(); ++q)
      vals[q] = 0.5 + 0.2 * std::cos(6.28318 * mesh.quad_x(q) / mesh.Lx()) +
                t * 0.3 * std::sin(6.28318 * mesh.quad_z(q) / mesh.Lz());
    return vals;
  };
  const double dt = 2.0;
  const std::vector<double> rho0 = rho_field(0.0), rho1 = rho_field(dt);
  const std::vector<double> v0 = mesh.project_div_par(v_field(0.0));
  const std::vector<double> v1 = mesh.project_div_par(v_field(dt));

  std::vector<double> w0(mesh.dim(Space::UPerp), 0.0);
  std::vector<double> pi0(mesh.dim(Space::Q), 0.0);
  const FluxSet f = stepper.flux_time_averages(v0, v1, w0, w0, rho0, rho1, pi0, pi0);

  // analytic (1/dt) int rho v dt with both factors linear in t:
  // rho0 v0 + (rho0 dv + drho v0)/2 + drho dv /3 evaluated pointwise
  const std::vector<double> v0q = mesh.eval(Space::UPar, v0);
  const std::vector<double> v1q = mesh.eval(Space::UPar, v1);
  std::vector<double> exact(mesh.quad_count());
  for (int q = 0; q < mesh.quad_count(); ++q) {
    const double dv = v1q[q] - v0q[q], dr = rho1[q] - rho0[q];
    exact[q] = rho0[q] * v0q[q] + 0.5 * (rho0[q] * dv + dr * v0q[q]) + dr * dv / 3.0;
  }
  const std::vector<double> vbar_exact = mesh.project_div_par(exact);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < vbar_exact.size(); ++i) {
    num = std::max(num, std::abs(f.V[i] - vbar_exact[i]));
    den = std::max(den, std::abs(vbar_exact[i]));
  }
  return num / den;
}

double column_energy_residual() {
  RunParams params;
  params.nx = 1;
  params.nz = 10;
  params.p = 2;
  params.Lx = 500.0;
  params.Lz = 1500.0;
  params.dt = 0.2;
  params.t_end = 2.0;
  params.column_mode = true;
  params.column_perturb = 1e-3;
  params.scheme.picard_tol = 1e-12;
  double worst = 0.0;
  const RunResult res = run_simulation(params);
  for (size_t i = 0; i < res.series.size(); ++i)
    worst = std::max(worst, std::abs(res.series[i].dH_step) / res.series[i].total);
  return worst;
}

double skew_cancellation_residual() {
  RunParams params;
  params.nx = 6;
  params.nz = 8;
  params.p = 3;
  params.dt = 0.05;
  params.t_end = 0.25;
  params.scheme.picard_tol = 1e-12;
  double worst = 0.0;
  const RunResult res = run_simulation(params);
  for (const StepDiagnostics& d : res.series)
    worst = std::max(worst, std::abs(d.balance_residual) / d.total);
  return worst;
}

}  // namespace

std::vector<CheckResult> run_checks(std::optional<double> tol_override) {
  std::vector<CheckResult> out;
  auto tol = [&](double def) { return tol_override.value_or(def); };

  {
    CheckResult r;
    r.name = "incidence nilpotency (meshes up to 6x6, p<=4)";
    r.passed = true;
    for (int p = 1; p <= 4 && r.passed; ++p) {
      MeshComplex mesh(p == 4 ? 6 : 4, 4, p, 2000.0, 1500.0);
      r.passed = mesh.incidence_nilpotency_check();
    }
    r.measured = r.passed ? 0.0 : 1.0;
    out.push_back(r);
  }
  {
    CheckResult r;
    r.name = "Galerkin projection orthogonality";
    r.tolerance = tol(1e-12);
    std::mt19937 rng(1234);
    MeshComplex mesh(5, 4, 3, 1000.0, 1500.0);
    r.measured = galerkin_orthogonality_residual(mesh, rng);
    r.passed = r.measured <= r.tolerance;
    out.push_back(r);
  }
  {
    CheckResult r;
    r.name = "flux time-average exactness on linear data";
    r.tolerance = tol(1e-13);
    r.measured = flux_average_exactness_residual();
    r.passed = r.measured <= r.tolerance;
    out.push_back(r);
  }
  {
    CheckResult r;
    r.name = "column implicit-substep energy conservation";
    r.tolerance = tol(1e-10);
    r.measured = column_energy_residual();
    r.passed = r.measured <= r.tolerance;
    out.push_back(r);
  }
  {
    CheckResult r;
    r.name = "skew-symmetric exchange cancellation";
    r.tolerance = tol(1e-10);
    r.measured = skew_cancellation_residual();
    r.passed = r.measured <= r.tolerance;
    out.push_back(r);
  }
  return out;
}

}  // namespace hevi
