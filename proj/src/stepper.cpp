#include "hevi/stepper.hpp"
#include <cstdlib>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "hevi/csvio.hpp"

namespace hevi {

namespace {

void add_scaled(std::vector<double>& y, double a, std::span<const double> x) {
  for (size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

std::vector<double> diff(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

}  // namespace

struct HeviStepper::Level {
  std::vector<double> v_q, w_q, rho_q, theta_density_q;
  std::vector<double> pi;    // Q coefficients of the projected Exner function
  std::vector<double> pi_q;
  ThetaDiagnosis theta;
  std::vector<double> pv;    // P coefficients of the weak-curl PV
  std::vector<double> pv_q;
};

HeviStepper::HeviStepper(const MeshComplex& mesh, PhysConstants constants, SchemeOptions opts)
    : mesh_(mesh), constants_(constants), opts_(opts) {
  constants_.validate();
  if (!(opts_.picard_tol > 0.0)) throw ConfigError("picard_tol must be positive");
  if (opts_.picard_max_iter < 1) throw ConfigError("picard_max_iter must be >= 1");
  std::vector<double> ones(mesh_.quad_count(), 1.0);
  const std::vector<double> unit_w = mesh_.mass_solve(Space::UPerp, mesh_.assemble(Space::UPerp, ones));
  w_coeff_floor_ = 1e-12 * numkit::norm2(unit_w);
}

HeviStepper::Level HeviStepper::make_level(std::span<const double> v, std::span<const double> w,
                                           std::span<const double> rho,
                                           std::span<const double> theta_density, double dt) const {
  Level lv;
  lv.v_q = mesh_.eval(Space::UPar, v);
  lv.w_q = mesh_.eval(Space::UPerp, w);
  lv.rho_q = mesh_.eval(Space::Q, rho);
  lv.theta_density_q = mesh_.eval(Space::Q, theta_density);
  for (int q = 0; q < mesh_.quad_count(); ++q) {
    if (!(lv.rho_q[q] > 0.0)) throw DomainError("state: rho not positive at a quadrature point");
    if (!(lv.theta_density_q[q] > 0.0)) throw DomainError("state: Theta not positive at a quadrature point");
  }
  lv.pi = exner(mesh_, theta_density, constants_);
  lv.pi_q = mesh_.eval(Space::Q, lv.pi);
  lv.theta = diagnose_theta(mesh_, rho, theta_density, opts_.upwind, w, dt, opts_.upwind_fraction);
  lv.pv = mesh_.weak_curl_pv(v, w, lv.rho_q);
  lv.pv_q = mesh_.eval(Space::P, lv.pv);
  return lv;
}

std::vector<double> HeviStepper::step1_horizontal(const StateVector* prev, const StateVector& cur,
                                                  double dt, HorizontalMode mode) const {
  if (mode == HorizontalMode::Leapfrog && prev == nullptr)
    throw ConfigError("step1: leapfrog requires the previous state (use Euler for the first step)");
  const Level lv = make_level(cur.v, cur.w, cur.rho, cur.theta_density, dt);

  // vertical mass flux W^n = P^div[rho^n w^n]
  std::vector<double> flux_vals(mesh_.quad_count());
  for (int q = 0; q < mesh_.quad_count(); ++q) flux_vals[q] = lv.rho_q[q] * lv.w_q[q];
  const std::vector<double> w_flux =
      mesh_.mass_solve(Space::UPerp, mesh_.assemble(Space::UPerp, flux_vals));
  const std::vector<double> w_flux_q = mesh_.eval(Space::UPerp, w_flux);

  // -<beta_par, q W> vorticity coupling
  std::vector<double> qW(mesh_.quad_count());
  for (int q = 0; q < mesh_.quad_count(); ++q) qW[q] = -lv.pv_q[q] * w_flux_q[q];
  std::vector<double> rhs = mesh_.assemble(Space::UPar, qW);

  // + (E_par)^T M_Q Phi^n
  const std::vector<double> phi = bernoulli(mesh_, cur.v, cur.w, constants_.g);
  add_scaled(rhs, 1.0, mesh_.div_par().apply_transpose(mesh_.mass_apply(Space::Q, phi)));

  // + <beta, theta^n beta> M^-1 (E_par)^T M_Q Pi^n
  std::vector<double> gp = mesh_.div_par().apply_transpose(mesh_.mass_apply(Space::Q, lv.pi));
  gp = mesh_.mass_solve(Space::UPar, gp);
  add_scaled(rhs, 1.0, mesh_.mass_apply(Space::UPar, gp, lv.theta.at_quad.data()));

  const double step = (mode == HorizontalMode::Leapfrog) ? 2.0 * dt : dt;
  const std::vector<double>& base = (mode == HorizontalMode::Leapfrog) ? prev->v : cur.v;
  std::vector<double> out = mesh_.mass_solve(Space::UPar, rhs);
  for (size_t i = 0; i < out.size(); ++i) out[i] = base[i] + step * out[i];
  return out;
}

FluxSet HeviStepper::flux_time_averages(std::span<const double> v_n, std::span<const double> v_prime,
                                        std::span<const double> w_n, std::span<const double> w_np1,
                                        std::span<const double> rho_n_at_quad,
                                        std::span<const double> rho_np1_at_quad,
                                        std::span<const double> pi_n,
                                        std::span<const double> pi_np1) const {
  const int nq = mesh_.quad_count();
  FluxSet f;

  const std::vector<double> vn_q = mesh_.eval(Space::UPar, v_n);
  const std::vector<double> vp_q = mesh_.eval(Space::UPar, v_prime);
  const std::vector<double> wn_q = mesh_.eval(Space::UPerp, w_n);
  const std::vector<double> w1_q = mesh_.eval(Space::UPerp, w_np1);

  std::vector<double> vals(nq);
  for (int q = 0; q < nq; ++q)
    vals[q] = (rho_n_at_quad[q] / 3.0 + rho_np1_at_quad[q] / 6.0) * vn_q[q] +
              (rho_n_at_quad[q] / 6.0 + rho_np1_at_quad[q] / 3.0) * vp_q[q];
  f.V = mesh_.mass_solve(Space::UPar, mesh_.assemble(Space::UPar, vals));

  for (int q = 0; q < nq; ++q)
    vals[q] = (rho_n_at_quad[q] / 3.0 + rho_np1_at_quad[q] / 6.0) * wn_q[q] +
              (rho_n_at_quad[q] / 6.0 + rho_np1_at_quad[q] / 3.0) * w1_q[q];
  f.W = mesh_.mass_solve(Space::UPerp, mesh_.assemble(Space::UPerp, vals));

  for (int q = 0; q < nq; ++q)
    vals[q] = (vn_q[q] * vn_q[q] + vn_q[q] * vp_q[q] + vp_q[q] * vp_q[q] + wn_q[q] * wn_q[q] +
               wn_q[q] * w1_q[q] + w1_q[q] * w1_q[q]) /
                  6.0 +
              constants_.g * mesh_.quad_z(q);
  f.Phi = mesh_.mass_solve(Space::Q, mesh_.assemble(Space::Q, vals));

  f.Pi.resize(pi_n.size());
  for (size_t i = 0; i < pi_n.size(); ++i) f.Pi[i] = 0.5 * (pi_n[i] + pi_np1[i]);
  return f;
}

HeviStepper::VerticalResult HeviStepper::solve_vertical_implicit(const StateVector& cur,
                                                                 std::span<const double> v_prime,
                                                                 double dt) const {
  const int nq = mesh_.quad_count();
  const int p = mesh_.degree();
  const int np = p + 1;
  const int nnz = mesh_.n_znodes();
  const int ni = nnz - 2;       // interior z-nodes
  const int nloc = p * ni;      // column unknowns
  const int band = p * np;

  const Level lvn = make_level(cur.v, cur.w, cur.rho, cur.theta_density, dt);
  const std::vector<double> vp_q = mesh_.eval(Space::UPar, v_prime);

  // kinetic part of Phi-bar that does not involve w^{n+1}, plus g z
  std::vector<double> kin_known(nq);
  for (int q = 0; q < nq; ++q)
    kin_known[q] = (lvn.v_q[q] * lvn.v_q[q] + lvn.v_q[q] * vp_q[q] + vp_q[q] * vp_q[q] +
                    lvn.w_q[q] * lvn.w_q[q]) /
                       6.0 +
                   constants_.g * mesh_.quad_z(q);
  const std::vector<double> r_phi_known = mesh_.assemble(Space::Q, kin_known);
  const std::vector<double> m_w_n = mesh_.mass_apply(Space::UPerp, cur.w);

  // iterate state (frozen quantities refreshed once per Picard pass)
  std::vector<double> w_star = cur.w;
  std::vector<double> w_star_q = lvn.w_q;
  std::vector<double> rho_star = cur.rho;
  std::vector<double> rho_star_q = lvn.rho_q;
  std::vector<double> theta_density_star = cur.theta_density;
  std::vector<double> theta_density_star_q = lvn.theta_density_q;
  std::vector<double> pi_star = lvn.pi;
  std::vector<double> pi_star_q = lvn.pi_q;
  std::vector<double> theta_star_q = lvn.theta.at_quad;
  std::vector<double> pv_star_q = mesh_.eval(
      Space::P, mesh_.weak_curl_pv(v_prime, cur.w, lvn.rho_q));

  VerticalResult out;
  std::vector<double> residual_history;
  std::vector<double> theta_half_q(nq), q_half_q(nq), b_weight(nq), vals(nq);
  std::vector<double> gn_weight(nq), gw_weight(nq), dpi_weight(nq);

  const double rho_norm = numkit::norm2(cur.rho);
  const double theta_density_norm = numkit::norm2(cur.theta_density);
  const double wn_norm = numkit::norm2(cur.w);
  const double eos_exponent = constants_.R / constants_.cv;
  double forcing_scale = 0.0;

  for (int iter = 1; iter <= opts_.picard_max_iter; ++iter) {
    for (int q = 0; q < nq; ++q) {
      theta_half_q[q] = 0.5 * (lvn.theta.at_quad[q] + theta_star_q[q]);
      q_half_q[q] = 0.5 * (lvn.pv_q[q] + pv_star_q[q]);
      b_weight[q] = (lvn.w_q[q] + w_star_q[q]) / 6.0;
      gn_weight[q] = lvn.rho_q[q] / 3.0 + rho_star_q[q] / 6.0;
      gw_weight[q] = lvn.rho_q[q] / 6.0 + rho_star_q[q] / 3.0;
      // equation of state linearised about the iterate: dPi/dTheta
      dpi_weight[q] = eos_exponent * pi_star_q[q] / theta_density_star_q[q];
    }
    std::vector<double> pi_bar_star(pi_star.size());
    for (size_t i = 0; i < pi_bar_star.size(); ++i) pi_bar_star[i] = 0.5 * (lvn.pi[i] + pi_star[i]);

    // V-bar and the horizontal Theta-flux from the frozen rho^{n+1} iterate
    for (int q = 0; q < nq; ++q) vals[q] = gn_weight[q] * lvn.v_q[q] + gw_weight[q] * vp_q[q];
    const std::vector<double> V_bar = mesh_.mass_solve(Space::UPar, mesh_.assemble(Space::UPar, vals));
    const std::vector<double> V_bar_q = mesh_.eval(Space::UPar, V_bar);
    const std::vector<double> F_v =
        mesh_.mass_solve(Space::UPar, mesh_.mass_apply(Space::UPar, V_bar, theta_half_q.data()));

    // w^{n+1}-independent parts of W-bar, Theta^{n+1} and the linearised
    // Pi-bar = 1/2 (Pi^n + Pi*) + 1/2 dPi (Theta^{n+1} - Theta*)
    const std::vector<double> W_known =
        mesh_.mass_solve(Space::UPerp, mesh_.mass_apply(Space::UPerp, cur.w, gn_weight.data()));
    const std::vector<double> F_w_known =
        mesh_.mass_solve(Space::UPerp, mesh_.mass_apply(Space::UPerp, W_known, theta_half_q.data()));
    std::vector<double> theta_density_known = cur.theta_density;
    add_scaled(theta_density_known, -dt, mesh_.div_par().apply(F_v));
    add_scaled(theta_density_known, -dt, mesh_.div_perp().apply(F_w_known));
    std::vector<double> pi_lin_known = mesh_.mass_solve(
        Space::Q,
        mesh_.mass_apply(Space::Q, diff(theta_density_known, theta_density_star), dpi_weight.data()));
    for (size_t i = 0; i < pi_lin_known.size(); ++i)
      pi_lin_known[i] = pi_bar_star[i] + 0.5 * pi_lin_known[i];

    // global right side of the w equation
    std::vector<double> rhs = m_w_n;
    const std::vector<double> f_phi = mesh_.div_perp().apply_transpose(r_phi_known);
    add_scaled(rhs, dt, f_phi);
    std::vector<double> gpi = mesh_.div_perp().apply_transpose(mesh_.mass_apply(Space::Q, pi_lin_known));
    gpi = mesh_.mass_solve(Space::UPerp, gpi);
    const std::vector<double> f_pi = mesh_.mass_apply(Space::UPerp, gpi, theta_half_q.data());
    add_scaled(rhs, dt, f_pi);
    for (int q = 0; q < nq; ++q) vals[q] = q_half_q[q] * V_bar_q[q];
    add_scaled(rhs, dt, mesh_.assemble(Space::UPerp, vals));

    // Velocity scale for the convergence test: the near-cancelling gravity
    // and pressure-gradient forcings bound what floating point can resolve
    // in w (backward-error normalisation).
    if (iter == 1) {
      forcing_scale = dt * (numkit::norm2(mesh_.mass_solve(Space::UPerp, f_phi)) +
                            numkit::norm2(mesh_.mass_solve(Space::UPerp, f_pi)));
    }

    // Per-column banded systems
    //   [M_perp - dt E_perp^T B + dt^2/2 L C R] w^{n+1} = rhs
    // with B the Bernoulli kinetic feedback, C = E_perp^T <gamma,dPi gamma>
    // E_perp and the node-block conjugations L = T_theta M^-1,
    // R = M^-1 T_theta M^-1 G_w carrying the buoyancy-acoustic implicitness.
    std::vector<double> w_new(mesh_.dim(Space::UPerp), 0.0);
    const double fx2 = 2.0 / mesh_.dx(), fz2 = 2.0 / mesh_.dz();
    const int wloc = p * np;  // per-element window size (x-edges times z-nodes)
    for (int ex = 0; ex < mesh_.nx(); ++ex) {
      numkit::BandedMatrix mat(nloc, band, band);
      std::vector<double> rcol(nloc);
      for (int i = 0; i < p; ++i)
        for (int zn = 1; zn <= ni; ++zn) rcol[(zn - 1) * p + i] = rhs[mesh_.wdof(ex * p + i, zn)];

      // node blocks of M_perp, T_theta and G_w over the column
      std::vector<numkit::DenseMatrix> mblk(nnz, numkit::DenseMatrix(p, p));
      std::vector<numkit::DenseMatrix> tblk(nnz, numkit::DenseMatrix(p, p));
      std::vector<numkit::DenseMatrix> gwblk(nnz, numkit::DenseMatrix(p, p));
      for (int ez = 0; ez < mesh_.nz(); ++ez) {
        const int qbase = (ex * mesh_.nz() + ez) * np * np;
        for (int a = 0; a < np; ++a)
          for (int b = 0; b < np; ++b) {
            const int q = qbase + a * np + b;
            const double wq = mesh_.quad_w(q);
            const int gzb = ez * p + b;
            for (int i = 0; i < p; ++i) {
              const double ei = mesh_.edge_value(i, a) * fx2;
              if (ei == 0.0) continue;
              for (int i2 = 0; i2 < p; ++i2) {
                const double pair = wq * ei * mesh_.edge_value(i2, a) * fx2;
                mblk[gzb](i, i2) += pair;
                tblk[gzb](i, i2) += pair * theta_half_q[q];
                gwblk[gzb](i, i2) += pair * gw_weight[q];
              }
            }
          }
      }
      // L = T M^-1 (via solving M^T X^T = T^T, M symmetric), R = M^-1 T M^-1 G_w
      std::vector<numkit::DenseMatrix> lblk(nnz), rblk(nnz);
      for (int zn = 0; zn < nnz; ++zn) {
        numkit::LuFactor lu(mblk[zn]);
        numkit::DenseMatrix l(p, p), r(p, p);
        std::vector<double> col(p);
        // columns of M^-1 G_w and M^-1 T
        numkit::DenseMatrix mg(p, p), mt(p, p);
        for (int j = 0; j < p; ++j) {
          for (int i = 0; i < p; ++i) col[i] = gwblk[zn](i, j);
          lu.solve_in_place(col);
          for (int i = 0; i < p; ++i) mg(i, j) = col[i];
          for (int i = 0; i < p; ++i) col[i] = tblk[zn](i, j);
          lu.solve_in_place(col);
          for (int i = 0; i < p; ++i) mt(i, j) = col[i];
        }
        // L = T M^-1 = (M^-1 T)^T by symmetry of M and T
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j) l(i, j) = mt(j, i);
        // R = (M^-1 T) (M^-1 G_w)
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j) {
            double s = 0.0;
            for (int k = 0; k < p; ++k) s += mt(i, k) * mg(k, j);
            r(i, j) = s;
          }
        lblk[zn] = std::move(l);
        rblk[zn] = std::move(r);
      }

      for (int ez = 0; ez < mesh_.nz(); ++ez) {
        const int qbase = (ex * mesh_.nz() + ez) * np * np;
        // element block of <gamma, dPi gamma> over (x-edge, local z-edge)
        numkit::DenseMatrix eth(p * p, p * p);
        for (int a = 0; a < np; ++a)
          for (int b = 0; b < np; ++b) {
            const int q = qbase + a * np + b;
            const double wq = mesh_.quad_w(q) * dpi_weight[q];
            const int gzb = ez * p + b;
            const bool col_ok = gzb >= 1 && gzb <= ni;
            for (int i = 0; i < p; ++i) {
              const double exv = mesh_.edge_value(i, a) * fx2;
              if (exv == 0.0) continue;
              for (int j0 = 0; j0 < p; ++j0) {
                const double g1 = exv * mesh_.edge_value(j0, b) * fz2;
                if (g1 == 0.0) continue;
                for (int i2 = 0; i2 < p; ++i2) {
                  const double exv2 = mesh_.edge_value(i2, a) * fx2;
                  if (exv2 == 0.0) continue;
                  for (int j02 = 0; j02 < p; ++j02)
                    eth(i * p + j0, i2 * p + j02) += wq * g1 * exv2 * mesh_.edge_value(j02, b) * fz2;
                }
              }
            }
            // M_perp part of the system (z-collocated)
            if (col_ok) {
              for (int i = 0; i < p; ++i) {
                const double ei = mesh_.edge_value(i, a);
                if (ei == 0.0) continue;
                for (int i2 = 0; i2 < p; ++i2)
                  mat.add((gzb - 1) * p + i, (gzb - 1) * p + i2,
                          mesh_.quad_w(q) * ei * mesh_.edge_value(i2, a) * fx2 * fx2);
              }
            }
            // -dt E_perp^T B with B = <gamma, (w^n + w*)/6 beta_perp>
            if (col_ok && b_weight[q] != 0.0) {
              for (int iq = 0; iq < p; ++iq) {
                const double gx = mesh_.edge_value(iq, a) * fx2;
                if (gx == 0.0) continue;
                for (int j0 = 0; j0 < p; ++j0) {
                  const double gz = mesh_.edge_value(j0, b) * fz2;
                  if (gz == 0.0) continue;
                  const int je = ez * p + j0;
                  const double bval = mesh_.quad_w(q) * gx * gz * b_weight[q];
                  for (int i2 = 0; i2 < p; ++i2) {
                    const double tr = mesh_.edge_value(i2, a) * fx2;
                    if (tr == 0.0) continue;
                    const int col = (gzb - 1) * p + i2;
                    // E10z[je, zn]: -1 at zn = je, +1 at zn = je + 1
                    if (je >= 1 && je <= ni) mat.add((je - 1) * p + iq, col, dt * bval * tr);
                    if (je + 1 >= 1 && je + 1 <= ni) mat.add(je * p + iq, col, -dt * bval * tr);
                  }
                }
              }
            }
          }

        // window product L C R with C = E^T eth E (local z-edge -> z-node)
        // S = eth E: columns become (x-edge i2, local node k)
        numkit::DenseMatrix s(p * p, wloc);
        for (int row = 0; row < p * p; ++row)
          for (int i2 = 0; i2 < p; ++i2)
            for (int k = 0; k <= p; ++k) {
              double v = 0.0;
              if (k - 1 >= 0 && k - 1 < p) v += eth(row, i2 * p + (k - 1));
              if (k < p) v -= eth(row, i2 * p + k);
              s(row, k * p + i2) = v;
            }
        // SR: right-multiply each node column-block by R[zn]
        numkit::DenseMatrix sr(p * p, wloc);
        for (int row = 0; row < p * p; ++row)
          for (int k = 0; k <= p; ++k) {
            const int zn = ez * p + k;
            for (int j = 0; j < p; ++j) {
              double v = 0.0;
              for (int i2 = 0; i2 < p; ++i2) v += s(row, k * p + i2) * rblk[zn](i2, j);
              sr(row, k * p + j) = v;
            }
          }
        // C R: rows from edges to nodes via E^T
        numkit::DenseMatrix cr(wloc, wloc);
        for (int i = 0; i < p; ++i)
          for (int k2 = 0; k2 <= p; ++k2) {
            for (int col = 0; col < wloc; ++col) {
              double v = 0.0;
              if (k2 - 1 >= 0 && k2 - 1 < p) v += sr(i * p + (k2 - 1), col);
              if (k2 < p) v -= sr(i * p + k2, col);
              cr(k2 * p + i, col) = v;
            }
          }
        // LCR: left-multiply each node row-block by L[zn]
        for (int k2 = 0; k2 <= p; ++k2) {
          const int znr = ez * p + k2;
          if (znr < 1 || znr > ni) continue;
          for (int i = 0; i < p; ++i) {
            for (int k = 0; k <= p; ++k) {
              const int znc = ez * p + k;
              if (znc < 1 || znc > ni) continue;
              for (int j = 0; j < p; ++j) {
                double v = 0.0;
                for (int i2 = 0; i2 < p; ++i2) v += lblk[znr](i, i2) * cr(k2 * p + i2, k * p + j);
                if (v != 0.0) mat.add((znr - 1) * p + i, (znc - 1) * p + j, 0.5 * dt * dt * v);
              }
            }
          }
        }
      }

      numkit::BandedLu lu(std::move(mat));
      lu.solve_in_place(rcol);
      for (int i = 0; i < p; ++i)
        for (int zn = 1; zn <= ni; ++zn) w_new[mesh_.wdof(ex * p + i, zn)] = rcol[(zn - 1) * p + i];
    }

    const std::vector<double> w_new_q = mesh_.eval(Space::UPerp, w_new);

    // W-bar from the frozen rho iterate and the solved w^{n+1}
    for (int q = 0; q < nq; ++q)
      vals[q] = gn_weight[q] * lvn.w_q[q] + gw_weight[q] * w_new_q[q];
    const std::vector<double> W_bar = mesh_.mass_solve(Space::UPerp, mesh_.assemble(Space::UPerp, vals));

    // density and Theta updates are coefficient-exact given the fluxes
    std::vector<double> rho_new = cur.rho;
    add_scaled(rho_new, -dt, mesh_.div_par().apply(V_bar));
    add_scaled(rho_new, -dt, mesh_.div_perp().apply(W_bar));

    const std::vector<double> F_w =
        mesh_.mass_solve(Space::UPerp, mesh_.mass_apply(Space::UPerp, W_bar, theta_half_q.data()));
    std::vector<double> theta_density_new = cur.theta_density;
    add_scaled(theta_density_new, -dt, mesh_.div_par().apply(F_v));
    add_scaled(theta_density_new, -dt, mesh_.div_perp().apply(F_w));

    const std::vector<double> rho_new_q = mesh_.eval(Space::Q, rho_new);
    const std::vector<double> theta_density_new_q = mesh_.eval(Space::Q, theta_density_new);
    if (std::getenv("HEVI_DEBUG")) {
      double wmax = 0, rmin = 1e30;
      for (int q = 0; q < nq; ++q) {
        wmax = std::max(wmax, std::abs(w_new_q[q]));
        rmin = std::min(rmin, rho_new_q[q]);
      }
      std::fprintf(stderr, "picard %d: |w|max=%g rho_min=%g\n", iter, wmax, rmin);
    }
    for (int q = 0; q < nq; ++q) {
      if (!(rho_new_q[q] > 0.0))
        throw DomainError("solve_vertical_implicit: rho <= 0 during Picard iteration");
      if (!(theta_density_new_q[q] > 0.0))
        throw DomainError("solve_vertical_implicit: Theta <= 0 during Picard iteration");
    }

    const double dw = numkit::norm2(diff(w_new, w_star));
    const double sw = std::max({numkit::norm2(w_new), wn_norm, forcing_scale, w_coeff_floor_});
    const double drho = numkit::norm2(diff(rho_new, rho_star)) / rho_norm;
    const double dtheta = numkit::norm2(diff(theta_density_new, theta_density_star)) / theta_density_norm;
    const double delta = std::max({dw / sw, drho, dtheta});
    residual_history.push_back(delta);

    if (delta <= opts_.picard_tol) {
      // Export the flux set the accepted solve actually used (including the
      // linearised Pi-bar); with it the update equations hold to machine
      // precision, so the exchange cancellation is independent of the Picard
      // tolerance.
      for (int q = 0; q < nq; ++q) vals[q] = b_weight[q] * w_new_q[q];
      std::vector<double> r_phi = mesh_.assemble(Space::Q, vals);
      for (size_t i = 0; i < r_phi.size(); ++i) r_phi[i] += r_phi_known[i];
      out.fluxes.Phi = mesh_.mass_solve(Space::Q, r_phi);
      std::vector<double> pi_corr = mesh_.mass_solve(
          Space::Q, mesh_.mass_apply(Space::Q, diff(theta_density_new, theta_density_star),
                                     dpi_weight.data()));
      out.fluxes.Pi.resize(pi_corr.size());
      for (size_t i = 0; i < pi_corr.size(); ++i)
        out.fluxes.Pi[i] = pi_bar_star[i] + 0.5 * pi_corr[i];
      out.fluxes.V = V_bar;
      out.fluxes.W = W_bar;
      out.w = std::move(w_new);
      out.rho = std::move(rho_new);
      out.theta_density = std::move(theta_density_new);
      out.q_half_at_quad = q_half_q;
      out.theta_half_at_quad = theta_half_q;
      out.picard_iterations = iter;
      out.implicit_residual = delta;
      return out;
    }

    w_star = std::move(w_new);
    w_star_q = w_new_q;
    rho_star = std::move(rho_new);
    rho_star_q = rho_new_q;
    theta_density_star = std::move(theta_density_new);
    theta_density_star_q = theta_density_new_q;

    // refresh the remaining frozen nonlinear quantities from the new iterate
    pi_star = exner(mesh_, theta_density_star, constants_);
    pi_star_q = mesh_.eval(Space::Q, pi_star);
    theta_star_q = diagnose_theta(mesh_, rho_star, theta_density_star, opts_.upwind, w_star, dt,
                                  opts_.upwind_fraction)
                       .at_quad;
    pv_star_q = mesh_.eval(Space::P, mesh_.weak_curl_pv(v_prime, w_star, rho_star_q));
  }

  std::ostringstream msg;
  msg << "solve_vertical_implicit: no convergence after " << opts_.picard_max_iter
      << " iterations; residual history:";
  for (double r : residual_history) msg << " " << r;
  throw NumericError(msg.str());
}

std::vector<double> HeviStepper::step3_horizontal(const StateVector& cur, const FluxSet& fluxes,
                                                  std::span<const double> q_half_at_quad,
                                                  std::span<const double> theta_half_at_quad,
                                                  double dt) const {
  const int nq = mesh_.quad_count();
  const std::vector<double> W_bar_q = mesh_.eval(Space::UPerp, fluxes.W);
  std::vector<double> vals(nq);
  for (int q = 0; q < nq; ++q) vals[q] = -q_half_at_quad[q] * W_bar_q[q];
  std::vector<double> rhs = mesh_.assemble(Space::UPar, vals);

  add_scaled(rhs, 1.0, mesh_.div_par().apply_transpose(mesh_.mass_apply(Space::Q, fluxes.Phi)));

  std::vector<double> gp = mesh_.div_par().apply_transpose(mesh_.mass_apply(Space::Q, fluxes.Pi));
  gp = mesh_.mass_solve(Space::UPar, gp);
  add_scaled(rhs, 1.0, mesh_.mass_apply(Space::UPar, gp, theta_half_at_quad.data()));

  std::vector<double> out = mesh_.mass_solve(Space::UPar, rhs);
  for (size_t i = 0; i < out.size(); ++i) out[i] = cur.v[i] + dt * out[i];
  return out;
}

std::vector<double> HeviStepper::biharmonic_tendency(std::span<const double> v, double coeff) const {
  if (coeff < 0.0) throw ConfigError("biharmonic coefficient must be >= 0");
  std::vector<double> out(v.size(), 0.0);
  if (coeff == 0.0) return out;
  auto weak_laplacian = [&](std::span<const double> u) {
    std::vector<double> t = mesh_.div_par().apply_transpose(
        mesh_.mass_apply(Space::Q, mesh_.div_par().apply(u)));
    t = mesh_.mass_solve(Space::UPar, t);
    for (double& x : t) x = -x;
    return t;
  };
  out = weak_laplacian(weak_laplacian(v));
  for (double& x : out) x = -coeff * x;
  return out;
}

HeviStepper::BalanceParts HeviStepper::energy_balance(const StateVector& before,
                                                      const StateVector& after,
                                                      std::span<const double> v_prime,
                                                      const FluxSet& fluxes) const {
  BalanceParts parts;
  parts.vertical_part =
      numkit::dot(fluxes.W, mesh_.mass_apply(Space::UPerp, diff(after.w, before.w))) +
      numkit::dot(fluxes.Phi, mesh_.mass_apply(Space::Q, diff(after.rho, before.rho))) +
      numkit::dot(fluxes.Pi, mesh_.mass_apply(Space::Q, diff(after.theta_density, before.theta_density))) +
      numkit::dot(fluxes.V, mesh_.mass_apply(Space::UPar, diff(after.v, before.v)));
  parts.horizontal_error = numkit::dot(fluxes.V, mesh_.mass_apply(Space::UPar, diff(v_prime, after.v)));
  return parts;
}

StepReport HeviStepper::step(const StateVector* prev, StateVector& state, double dt) const {
  const EnergyBreakdown e0 = energy(state);

  std::vector<double> v_prime;
  if (opts_.column_mode) {
    v_prime.assign(mesh_.dim(Space::UPar), 0.0);
  } else {
    const HorizontalMode mode = (prev && !opts_.step1_euler) ? HorizontalMode::Leapfrog
                                                             : HorizontalMode::Euler;
    v_prime = step1_horizontal(prev, state, dt, mode);
  }

  VerticalResult vr = solve_vertical_implicit(state, v_prime, dt);

  StateVector after;
  after.t = state.t + dt;
  after.w = std::move(vr.w);
  after.rho = std::move(vr.rho);
  after.theta_density = std::move(vr.theta_density);
  if (opts_.column_mode) {
    after.v = state.v;
  } else {
    after.v = step3_horizontal(state, vr.fluxes, vr.q_half_at_quad, vr.theta_half_at_quad, dt);
    if (opts_.viscosity > 0.0)
      add_scaled(after.v, dt, biharmonic_tendency(state.v, opts_.viscosity));
  }

  const BalanceParts parts = energy_balance(state, after, v_prime, vr.fluxes);

  StepReport rep;
  rep.p2k = constants_.g *
            numkit::dot(mesh_.height_q(), mesh_.mass_apply(Space::Q, mesh_.div_perp().apply(vr.fluxes.W)));
  rep.i2k = -numkit::dot(vr.fluxes.Pi,
                         mesh_.mass_apply(Space::Q, diff(after.theta_density, state.theta_density))) /
            dt;

  state = std::move(after);
  const EnergyBreakdown e1 = energy(state);
  rep.picard_iterations = vr.picard_iterations;
  rep.implicit_residual = vr.implicit_residual;
  rep.energy_balance_residual = parts.vertical_part;
  rep.horizontal_error = parts.horizontal_error;
  rep.dH = e1.total() - e0.total();
  return rep;
}

EnergyBreakdown HeviStepper::energy(const StateVector& s) const {
  return total_energy(mesh_, s.v, s.w, s.rho, s.theta_density, constants_);
}

ThetaDiagnosis HeviStepper::theta_of(const StateVector& s, double dt) const {
  return diagnose_theta(mesh_, s.rho, s.theta_density, opts_.upwind, s.w, dt, opts_.upwind_fraction);
}

// --- hydrostatic initialisation ---------------------------------------------

namespace {

// Invert the projected equation of state: find Theta coefficients such that
// the L2 projection of cp (R Theta_h / p0)^(R/cv) equals pi. Element-local
// Newton on the assembled residual.
std::vector<double> invert_exner_projection(const MeshComplex& mesh, std::span<const double> pi,
                                            const PhysConstants& c) {
  const int p = mesh.degree();
  const int np = p + 1;
  const int nloc = p * p;
  const double fx2 = 2.0 / mesh.dx(), fz2 = 2.0 / mesh.dz();
  const std::vector<double> target = mesh.mass_apply(Space::Q, pi);

  // pointwise inversion as the starting guess
  std::vector<double> pi_q = mesh.eval(Space::Q, pi);
  std::vector<double> theta_pt(mesh.quad_count());
  for (int q = 0; q < mesh.quad_count(); ++q) {
    if (!(pi_q[q] > 0.0)) throw DomainError("hydrostatic balance: non-positive Exner pressure");
    theta_pt[q] = (c.p0 / c.R) * std::pow(pi_q[q] / c.cp, c.cv / c.R);
  }
  std::vector<double> theta = mesh.mass_solve(Space::Q, mesh.assemble(Space::Q, theta_pt));

  const double expo = c.R / c.cv;
  std::vector<double> loc(nloc), fval(nloc);
  for (int ex = 0; ex < mesh.nx(); ++ex)
    for (int ez = 0; ez < mesh.nz(); ++ez) {
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) loc[i * p + j] = theta[mesh.qdof(ex * p + i, ez * p + j)];
      double target_norm = 0.0;
      for (int i = 0; i < nloc; ++i) {
        const int dof = mesh.qdof(ex * p + i / p, ez * p + i % p);
        target_norm = std::max(target_norm, std::abs(target[dof]));
      }
      for (int newton = 0; newton < 50; ++newton) {
        numkit::DenseMatrix jac(nloc, nloc);
        std::fill(fval.begin(), fval.end(), 0.0);
        const int qbase = (ex * mesh.nz() + ez) * np * np;
        for (int a = 0; a < np; ++a)
          for (int b = 0; b < np; ++b) {
            const int q = qbase + a * np + b;
            double th = 0.0;
            for (int i = 0; i < p; ++i)
              for (int j = 0; j < p; ++j)
                th += loc[i * p + j] * mesh.edge_value(i, a) * mesh.edge_value(j, b);
            th *= fx2 * fz2;
            if (!(th > 0.0)) throw DomainError("hydrostatic balance: Theta iterate not positive");
            const double piv = c.cp * std::pow(c.R * th / c.p0, expo);
            const double dpiv = expo * piv / th;
            const double wq = mesh.quad_w(q);
            for (int i = 0; i < p; ++i)
              for (int j = 0; j < p; ++j) {
                const double gi = mesh.edge_value(i, a) * mesh.edge_value(j, b) * fx2 * fz2;
                if (gi == 0.0) continue;
                fval[i * p + j] += wq * gi * piv;
                for (int i2 = 0; i2 < p; ++i2)
                  for (int j2 = 0; j2 < p; ++j2) {
                    const double gj = mesh.edge_value(i2, a) * mesh.edge_value(j2, b) * fx2 * fz2;
                    jac(i * p + j, i2 * p + j2) += wq * gi * dpiv * gj;
                  }
              }
          }
        double err = 0.0;
        for (int i = 0; i < nloc; ++i) {
          const int dof = mesh.qdof(ex * p + i / p, ez * p + i % p);
          fval[i] -= target[dof];
          err = std::max(err, std::abs(fval[i]));
        }
        if (err <= 1e-14 * std::max(target_norm, 1.0)) break;
        const std::vector<double> delta = numkit::lu_solve(jac, fval);
        for (int i = 0; i < nloc; ++i) loc[i] -= delta[i];
      }
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) theta[mesh.qdof(ex * p + i, ez * p + j)] = loc[i * p + j];
    }
  return theta;
}

}  // namespace

BalancedState hydrostatic_balance(const MeshComplex& mesh, const PhysConstants& c, double theta0,
                                  const SchemeOptions& opts, double dt) {
  const int p = mesh.degree();
  const int np = p + 1;
  const int nnz = mesh.n_znodes();
  const int nez = mesh.n_zedges();
  const int ni = nnz - 2;
  const int nq = mesh.quad_count();

  if (!(c.cp - c.g * mesh.Lz() / theta0 > 0.0))
    throw ConfigError("hydrostatic balance: domain too tall for the analytic Exner background");

  // analytic background used for the top-cell pin and the first guess
  std::vector<double> pi_an(nq);
  for (int q = 0; q < nq; ++q) pi_an[q] = c.cp - c.g * mesh.quad_z(q) / theta0;
  std::vector<double> pi = mesh.mass_solve(Space::Q, mesh.assemble(Space::Q, pi_an));
  std::vector<double> theta_density = invert_exner_projection(mesh, pi, c);

  auto rho_of = [&](std::span<const double> theta_density_coeffs) {
    std::vector<double> vals = mesh.eval(Space::Q, theta_density_coeffs);
    for (double& v : vals) v /= theta0;
    return mesh.mass_solve(Space::Q, mesh.assemble(Space::Q, vals));
  };
  std::vector<double> rho = rho_of(theta_density);

  std::vector<double> gz = mesh.height_q();
  for (double& v : gz) v *= c.g;
  const std::vector<double> grad_g = mesh.div_perp().apply_transpose(mesh.mass_apply(Space::Q, gz));

  const double fx2 = 2.0 / mesh.dx();
  std::vector<double> pi_prev = pi;
  for (int outer = 0; outer < 50; ++outer) {
    const ThetaDiagnosis th =
        diagnose_theta(mesh, rho, theta_density, opts.upwind, std::vector<double>(mesh.dim(Space::UPerp), 0.0),
                       dt, opts.upwind_fraction);

    // One x-element column; the background is x-uniform so the solution is
    // broadcast across columns (per local x-edge index).
    const int ex = 0;

    // M_Q restricted to the column, z-major local index (je * p + i)
    numkit::DenseMatrix mq(p * nez, p * nez);
    numkit::DenseMatrix tth(p * nnz, p * nnz);   // <beta, theta beta> blocks by z-node
    numkit::DenseMatrix mperp(p * nnz, p * nnz);
    const double fz2 = 2.0 / mesh.dz();
    for (int ez = 0; ez < mesh.nz(); ++ez) {
      const int qbase = (ex * mesh.nz() + ez) * np * np;
      for (int a = 0; a < np; ++a)
        for (int b = 0; b < np; ++b) {
          const int q = qbase + a * np + b;
          const double wq = mesh.quad_w(q);
          for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) {
              const double gi = mesh.edge_value(i, a) * mesh.edge_value(j, b) * fx2 * fz2;
              if (gi == 0.0) continue;
              for (int i2 = 0; i2 < p; ++i2)
                for (int j2 = 0; j2 < p; ++j2)
                  mq((ez * p + j) * p + i, (ez * p + j2) * p + i2) +=
                      wq * gi * mesh.edge_value(i2, a) * mesh.edge_value(j2, b) * fx2 * fz2;
            }
          const int gzb = ez * p + b;
          for (int i = 0; i < p; ++i) {
            const double ei = mesh.edge_value(i, a) * fx2;
            if (ei == 0.0) continue;
            for (int i2 = 0; i2 < p; ++i2) {
              const double e2 = mesh.edge_value(i2, a) * fx2;
              mperp(gzb * p + i, gzb * p + i2) += wq * ei * e2;
              tth(gzb * p + i, gzb * p + i2) += wq * ei * e2 * th.at_quad[q];
            }
          }
        }
    }

    // A = T_theta M_perp^{-1} E_perp^T M_Q on the column (interior rows)
    // E_perp^T: row (i, zn) picks +B(i, zn-1) - B(i, zn) of Q-edge rows.
    numkit::DenseMatrix emq(p * nnz, p * nez);
    for (int zn = 0; zn < nnz; ++zn)
      for (int i = 0; i < p; ++i)
        for (int col = 0; col < p * nez; ++col) {
          double v = 0.0;
          if (zn - 1 >= 0 && zn - 1 < nez) v += mq((zn - 1) * p + i, col);
          if (zn < nez) v -= mq(zn * p + i, col);
          emq(zn * p + i, col) = v;
        }
    // apply M_perp^{-1} blockwise per z-node
    for (int zn = 0; zn < nnz; ++zn) {
      numkit::DenseMatrix blk(p, p);
      for (int i = 0; i < p; ++i)
        for (int i2 = 0; i2 < p; ++i2) blk(i, i2) = mperp(zn * p + i, zn * p + i2);
      numkit::LuFactor lu(std::move(blk));
      std::vector<double> colv(p);
      for (int col = 0; col < p * nez; ++col) {
        for (int i = 0; i < p; ++i) colv[i] = emq(zn * p + i, col);
        lu.solve_in_place(colv);
        for (int i = 0; i < p; ++i) emq(zn * p + i, col) = colv[i];
      }
    }
    numkit::DenseMatrix a_sys(p * nez, p * nez);
    std::vector<double> rhs(p * nez, 0.0);
    for (int zn = 1; zn <= ni; ++zn)
      for (int i = 0; i < p; ++i) {
        const int row = (zn - 1) * p + i;
        for (int col = 0; col < p * nez; ++col) {
          double v = 0.0;
          for (int i2 = 0; i2 < p; ++i2)
            v += tth(zn * p + i, zn * p + i2) * emq(zn * p + i2, col);
          a_sys(row, col) = v;
        }
        rhs[row] = -grad_g[mesh.wdof(ex * p + i, zn)];
      }
    // pins: top-cell Exner coefficients from the analytic background
    for (int i = 0; i < p; ++i) {
      const int row = ni * p + i;
      a_sys(row, (nez - 1) * p + i) = 1.0;
      rhs[row] = pi[mesh.qdof(ex * p + i, nez - 1)];
    }

    const std::vector<double> pi_col = numkit::lu_solve(a_sys, rhs);
    for (int e2 = 0; e2 < mesh.nx(); ++e2)
      for (int i = 0; i < p; ++i)
        for (int je = 0; je < nez; ++je) pi[mesh.qdof(e2 * p + i, je)] = pi_col[je * p + i];

    theta_density = invert_exner_projection(mesh, pi, c);
    rho = rho_of(theta_density);

    double dpi = 0.0, pnorm = 0.0;
    for (size_t i = 0; i < pi.size(); ++i) {
      dpi = std::max(dpi, std::abs(pi[i] - pi_prev[i]));
      pnorm = std::max(pnorm, std::abs(pi[i]));
    }
    pi_prev = pi;
    if (dpi <= 1e-14 * pnorm) break;
  }

  // verify the discrete balance actually closed
  const ThetaDiagnosis th =
      diagnose_theta(mesh, rho, theta_density, opts.upwind,
                     std::vector<double>(mesh.dim(Space::UPerp), 0.0), dt, opts.upwind_fraction);
  std::vector<double> resid = grad_g;
  std::vector<double> gpi = mesh.div_perp().apply_transpose(mesh.mass_apply(Space::Q, pi));
  gpi = mesh.mass_solve(Space::UPerp, gpi);
  add_scaled(resid, 1.0, mesh.mass_apply(Space::UPerp, gpi, th.at_quad.data()));
  double rnorm = 0.0, gnorm = 0.0;
  for (int dof = 0; dof < mesh.dim(Space::UPerp); ++dof) {
    if (mesh.is_wall_wdof(dof)) continue;
    rnorm = std::max(rnorm, std::abs(resid[dof]));
    gnorm = std::max(gnorm, std::abs(grad_g[dof]));
  }
  if (rnorm > 1e-10 * std::max(gnorm, 1.0))
    throw NumericError("hydrostatic balance: residual " + std::to_string(rnorm) +
                       " did not converge");

  BalancedState out;
  out.rho = std::move(rho);
  out.theta_density = std::move(theta_density);
  out.pi = std::move(pi);
  return out;
}

StateVector bubble_state(const MeshComplex& mesh, const PhysConstants& c, const BubbleParams& bp,
                         const SchemeOptions& opts, double dt) {
  BalancedState bal = hydrostatic_balance(mesh, c, bp.theta0, opts, dt);
  StateVector s;
  s.v.assign(mesh.dim(Space::UPar), 0.0);
  s.w.assign(mesh.dim(Space::UPerp), 0.0);
  s.theta_density = bal.theta_density;

  // The Exner and Theta fields stay at the balanced background; the density
  // carries the thermal anomaly, rho = Theta / theta_perturbed.
  const std::vector<double> theta_density_q = mesh.eval(Space::Q, s.theta_density);
  const double pi_c = std::acos(-1.0);
  std::vector<double> vals(mesh.quad_count());
  for (int q = 0; q < mesh.quad_count(); ++q) {
    const double dx = mesh.quad_x(q) - bp.x_c;
    const double dz = mesh.quad_z(q) - bp.z_c;
    const double r = std::sqrt(dx * dx + dz * dz);
    double theta = bp.theta0;
    if (r <= bp.radius) theta += 0.5 * bp.dtheta * (1.0 + std::cos(pi_c * r / bp.radius));
    vals[q] = theta_density_q[q] / theta;
  }
  s.rho = mesh.mass_solve(Space::Q, mesh.assemble(Space::Q, vals));
  return s;
}

StateVector column_state(const MeshComplex& mesh, const PhysConstants& c, double theta0,
                         double amplitude, const SchemeOptions& opts, double dt) {
  BalancedState bal = hydrostatic_balance(mesh, c, theta0, opts, dt);
  StateVector s;
  s.v.assign(mesh.dim(Space::UPar), 0.0);
  s.w.assign(mesh.dim(Space::UPerp), 0.0);
  s.rho = bal.rho;

  const std::vector<double> theta_density_q = mesh.eval(Space::Q, bal.theta_density);
  const double pi_c = std::acos(-1.0);
  const double z_c = 0.5 * mesh.Lz(), half = 0.25 * mesh.Lz();
  std::vector<double> vals(mesh.quad_count());
  for (int q = 0; q < mesh.quad_count(); ++q) {
    const double r = std::abs(mesh.quad_z(q) - z_c);
    const double bump = r <= half ? 0.5 * (1.0 + std::cos(pi_c * r / half)) : 0.0;
    vals[q] = theta_density_q[q] * (1.0 + amplitude * bump);
  }
  s.theta_density = mesh.mass_solve(Space::Q, mesh.assemble(Space::Q, vals));
  return s;
}

// --- driver -----------------------------------------------------------------

RunResult run_simulation(const RunParams& params, const StepObserver& observer) {
  MeshComplex mesh(params.nx, params.nz, params.p, params.Lx, params.Lz);
  SchemeOptions opts = params.scheme;
  opts.column_mode = params.column_mode;
  HeviStepper stepper(mesh, params.constants, opts);

  RunResult result;
  StateVector state = params.column_mode
                          ? column_state(mesh, params.constants, params.theta0, params.column_perturb,
                                         opts, params.dt)
                          : bubble_state(mesh, params.constants, params.bubble, opts, params.dt);

  const int nsteps = static_cast<int>(std::llround(params.t_end / params.dt));
  const bool writing = !params.out_dir.empty();
  if (writing) std::filesystem::create_directories(params.out_dir);

  const std::vector<std::string> columns = {"t",       "K",       "P",   "I",   "H",
                                            "dH",      "balance_residual", "entropy", "p2k",
                                            "i2k"};
  std::vector<std::vector<double>> rows;

  auto snapshot = [&](int index, const StateVector& s) {
    if (!writing) return;
    char name[32];
    std::snprintf(name, sizeof(name), "theta_%04d.csv", index);
    const ThetaDiagnosis th = stepper.theta_of(s, params.dt);
    write_field_csv(params.out_dir + "/" + name, mesh, "theta", s.t, th.at_quad);
  };

  const EnergyBreakdown e0 = stepper.energy(state);
  int snap_index = 0;
  if (params.snapshot_every > 0) snapshot(snap_index++, state);

  auto diagnostics_of = [&](const StateVector& s, const StepReport& rep) {
    StepDiagnostics d;
    const EnergyBreakdown e = stepper.energy(s);
    d.t = s.t;
    d.kinetic = e.kinetic;
    d.potential = e.potential;
    d.internal = e.internal;
    d.total = e.total();
    d.dH = e.total() - e0.total();
    d.dH_step = rep.dH;
    d.balance_residual = rep.energy_balance_residual;
    d.horizontal_error = rep.horizontal_error;
    d.picard_iterations = rep.picard_iterations;
    d.implicit_residual = rep.implicit_residual;

    const ThetaDiagnosis th = stepper.theta_of(s, params.dt);
    const std::vector<double> rho_q = mesh.eval(Space::Q, s.rho);
    d.entropy = entropy_diagnostic(mesh, th.at_quad, rho_q, params.constants);
    double num = 0.0, den = 0.0, tmax = -1e300;
    for (int q = 0; q < mesh.quad_count(); ++q) {
      tmax = std::max(tmax, th.at_quad[q]);
      const double anomaly = std::max(th.at_quad[q] - params.theta0, 0.0);
      num += mesh.quad_w(q) * mesh.quad_z(q) * anomaly;
      den += mesh.quad_w(q) * anomaly;
    }
    d.theta_max = tmax;
    d.centroid_z = den > 0.0 ? num / den : 0.0;
    return d;
  };

  auto flush = [&]() {
    if (writing) write_timeseries(params.out_dir + "/energy.csv", columns, rows);
  };

  StateVector prev;
  bool have_prev = false;
  try {
    for (int n = 0; n < nsteps; ++n) {
      StateVector before = state;
      StepReport rep = stepper.step(have_prev ? &prev : nullptr, state, params.dt);
      prev = std::move(before);
      have_prev = true;

      StepDiagnostics d = diagnostics_of(state, rep);
      d.p2k = rep.p2k;
      d.i2k = rep.i2k;
      rows.push_back({d.t, d.kinetic, d.potential, d.internal, d.total, d.dH, d.balance_residual,
                      d.entropy, d.p2k, d.i2k});
      if (observer) observer(d, state);
      if (params.snapshot_every > 0 && (n + 1) % params.snapshot_every == 0) snapshot(snap_index++, state);
      result.series.push_back(d);
    }
  } catch (...) {
    flush();
    throw;
  }
  flush();
  result.final_state = std::move(state);
  return result;
}

}  // namespace hevi
