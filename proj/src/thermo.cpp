#include "hevi/thermo.hpp"

#include <algorithm>
#include <cmath>

namespace hevi {

void PhysConstants::validate() const {
  if (!(cp > 0.0) || !(cv > 0.0) || !(R > 0.0) || !(p0 > 0.0) || !(g >= 0.0))
    throw ConfigError("PhysConstants: constants must be positive");
  if (std::abs(R - (cp - cv)) > 1e-10 * cp)
    throw ConfigError("PhysConstants: R must equal cp - cv");
}

std::vector<double> exner_pointwise(const MeshComplex& mesh, std::span<const double> theta_density_q,
                                    const PhysConstants& c) {
  std::vector<double> vals = mesh.eval(Space::Q, theta_density_q);
  const double expo = c.R / c.cv;
  for (double& t : vals) {
    if (!(t > 0.0)) throw DomainError("exner: Theta not positive at a quadrature point");
    t = c.cp * std::pow(c.R * t / c.p0, expo);
  }
  return vals;
}

std::vector<double> exner(const MeshComplex& mesh, std::span<const double> theta_density_q,
                          const PhysConstants& c) {
  return mesh.mass_solve(Space::Q, mesh.assemble(Space::Q, exner_pointwise(mesh, theta_density_q, c)));
}

std::vector<double> bernoulli(const MeshComplex& mesh, std::span<const double> v,
                              std::span<const double> w, double g) {
  const std::vector<double> vv = mesh.eval(Space::UPar, v);
  const std::vector<double> wv = mesh.eval(Space::UPerp, w);
  std::vector<double> vals(mesh.quad_count());
  for (int q = 0; q < mesh.quad_count(); ++q)
    vals[q] = 0.5 * (vv[q] * vv[q] + wv[q] * wv[q]) + g * mesh.quad_z(q);
  return mesh.mass_solve(Space::Q, mesh.assemble(Space::Q, vals));
}

EnergyBreakdown total_energy(const MeshComplex& mesh, std::span<const double> v,
                             std::span<const double> w, std::span<const double> rho,
                             std::span<const double> theta_density, const PhysConstants& c,
                             bool over_integrate) {
  std::vector<double> vv, wv, rv, tv, zq, wq;
  if (!over_integrate) {
    vv = mesh.eval(Space::UPar, v);
    wv = mesh.eval(Space::UPerp, w);
    rv = mesh.eval(Space::Q, rho);
    tv = mesh.eval(Space::Q, theta_density);
    zq.resize(mesh.quad_count());
    wq.resize(mesh.quad_count());
    for (int q = 0; q < mesh.quad_count(); ++q) {
      zq[q] = mesh.quad_z(q);
      wq[q] = mesh.quad_w(q);
    }
  } else {
    const QuadRule rule = mesh.overint_rule();
    vv = mesh.eval_on(rule, Space::UPar, v);
    wv = mesh.eval_on(rule, Space::UPerp, w);
    rv = mesh.eval_on(rule, Space::Q, rho);
    tv = mesh.eval_on(rule, Space::Q, theta_density);
    std::vector<double> xq;
    mesh.quad_geometry(rule, xq, zq, wq);
  }
  EnergyBreakdown e;
  const double expo = c.R / c.cv;
  for (size_t q = 0; q < wq.size(); ++q) {
    if (!(rv[q] > 0.0)) throw DomainError("total_energy: rho not positive at a quadrature point");
    if (!(tv[q] > 0.0)) throw DomainError("total_energy: Theta not positive at a quadrature point");
    const double pi = c.cp * std::pow(c.R * tv[q] / c.p0, expo);
    e.kinetic += wq[q] * 0.5 * rv[q] * (vv[q] * vv[q] + wv[q] * wv[q]);
    e.potential += wq[q] * rv[q] * c.g * zq[q];
    e.internal += wq[q] * (c.cv / c.cp) * tv[q] * pi;
  }
  return e;
}

double downwind_coord(const NodalBasis& basis, double zeta, std::span<const double> w_ref_nodal,
                      double dt, double fraction) {
  double w = 0.0;
  for (int j = 0; j <= basis.degree(); ++j) w += w_ref_nodal[j] * basis.lagrange(j, zeta);
  return std::clamp(zeta + fraction * dt * w, -1.0, 1.0);
}

ThetaDiagnosis diagnose_theta(const MeshComplex& mesh, std::span<const double> rho_q,
                              std::span<const double> theta_density_q, bool upwind,
                              std::span<const double> w_coeffs, double dt, double upwind_fraction) {
  const int p = mesh.degree();
  const int np = p + 1;
  const int nnz = mesh.n_znodes();
  const NodalBasis& basis = mesh.basis();

  const std::vector<double> rho = mesh.eval(Space::Q, rho_q);
  for (int q = 0; q < mesh.quad_count(); ++q)
    if (!(rho[q] > 0.0)) throw DomainError("diagnose_theta: rho not positive at a quadrature point");
  const std::vector<double> theta_density = mesh.eval(Space::Q, theta_density_q);
  std::vector<double> w_ref;
  if (upwind) {
    w_ref = mesh.eval(Space::UPerp, w_coeffs);
    for (double& v : w_ref) v *= 2.0 / mesh.dz();
  }

  ThetaDiagnosis out;
  out.coeffs.assign(mesh.dim(Space::UPerp), 0.0);

  const double fx2 = 2.0 / mesh.dx();
  const int nloc = p * nnz;  // unknowns per x-element column, z-major
  const int band = p * np;
  std::vector<double> test_z(np);

  for (int ex = 0; ex < mesh.nx(); ++ex) {
    numkit::BandedMatrix mat(nloc, band, band);
    std::vector<double> rhs(nloc, 0.0);
    for (int ez = 0; ez < mesh.nz(); ++ez) {
      const int qbase = (ex * mesh.nz() + ez) * np * np;
      for (int a = 0; a < np; ++a)
        for (int b = 0; b < np; ++b) {
          const int q = qbase + a * np + b;
          const double zeta = basis.nodes()[b];
          double zeta_d = zeta;
          if (upwind) zeta_d = std::clamp(zeta + upwind_fraction * dt * w_ref[q], -1.0, 1.0);
          if (zeta_d == zeta) {
            for (int k = 0; k < np; ++k) test_z[k] = (k == b) ? 1.0 : 0.0;
          } else {
            for (int k = 0; k < np; ++k) test_z[k] = basis.lagrange(k, zeta_d);
          }
          const double w = mesh.quad_w(q);
          for (int i = 0; i < p; ++i) {
            const double te_x = mesh.edge_value(i, a) * fx2;
            if (te_x == 0.0) continue;
            for (int k = 0; k < np; ++k) {
              const double test = te_x * test_z[k];
              if (test == 0.0) continue;
              const int row = (ez * p + k) * p + i;
              rhs[row] += w * test * theta_density[q];
              const double wrt = w * test * rho[q];
              for (int i2 = 0; i2 < p; ++i2) {
                const double tr_x = mesh.edge_value(i2, a) * fx2;
                if (tr_x == 0.0) continue;
                // trial z-factor is collocated: l_{b}(zeta_b)
                mat.add(row, (ez * p + b) * p + i2, wrt * tr_x);
              }
            }
          }
        }
    }
    numkit::BandedLu lu(std::move(mat));
    lu.solve_in_place(rhs);
    for (int jn = 0; jn < nnz; ++jn)
      for (int i = 0; i < p; ++i) out.coeffs[mesh.wdof(ex * p + i, jn)] = rhs[jn * p + i];
  }

  out.at_quad = mesh.eval(Space::UPerp, out.coeffs);
  return out;
}

double entropy_diagnostic(const MeshComplex& mesh, std::span<const double> theta_at_quad,
                          std::span<const double> rho_at_quad, const PhysConstants& c, double s0) {
  double s = 0.0;
  for (int q = 0; q < mesh.quad_count(); ++q) {
    if (!(theta_at_quad[q] > 0.0)) throw DomainError("entropy: theta not positive at a quadrature point");
    s += mesh.quad_w(q) * rho_at_quad[q] * (c.cp * std::log(theta_at_quad[q]) + s0);
  }
  return s;
}

}  // namespace hevi
