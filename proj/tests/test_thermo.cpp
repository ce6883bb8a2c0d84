#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "hevi/thermo.hpp"

using namespace hevi;

namespace {

std::vector<double> project_q(const MeshComplex& mesh, const std::vector<double>& vals) {
  return mesh.mass_solve(Space::Q, mesh.assemble(Space::Q, vals));
}

}  // namespace

TEST_CASE("constants validation") {
  PhysConstants c;
  c.validate();
  CHECK(c.R == doctest::Approx(c.cp - c.cv));
  c.R = 290.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("exner on constant fields") {
  MeshComplex mesh(2, 2, 2, 3.0, 4.0);
  PhysConstants c;

  // Theta = p0 / R makes R Theta / p0 = 1, so Pi = cp
  std::vector<double> unit(mesh.quad_count(), c.p0 / c.R);
  auto pi = exner(mesh, project_q(mesh, unit), c);
  for (double v : mesh.eval(Space::Q, pi))
    CHECK(v == doctest::Approx(c.cp).epsilon(1e-12));

  // Theta = (p0/R) 2^{cv/R} doubles the Exner function
  std::vector<double> twice(mesh.quad_count(), c.p0 / c.R * std::pow(2.0, c.cv / c.R));
  pi = exner(mesh, project_q(mesh, twice), c);
  for (double v : mesh.eval(Space::Q, pi))
    CHECK(v == doctest::Approx(2.0 * c.cp).epsilon(1e-12));
}

TEST_CASE("exner matches the pointwise-then-project oracle") {
  MeshComplex mesh(2, 2, 3, 5.0, 5.0);
  PhysConstants c;
  std::vector<double> theta(mesh.quad_count());
  for (int q = 0; q < mesh.quad_count(); ++q)
    theta[q] = 300.0 * (1.0 + 0.1 * std::sin(2.0 * M_PI * mesh.quad_x(q) / mesh.Lx()) +
                        0.05 * mesh.quad_z(q) / mesh.Lz());
  const auto theta_c = project_q(mesh, theta);

  const auto pi = exner(mesh, theta_c, c);
  // oracle: evaluate Theta_h pointwise, apply the law, project
  const auto theta_h = mesh.eval(Space::Q, theta_c);
  std::vector<double> vals(mesh.quad_count());
  for (int q = 0; q < mesh.quad_count(); ++q)
    vals[q] = c.cp * std::pow(c.R * theta_h[q] / c.p0, c.R / c.cv);
  const auto oracle = project_q(mesh, vals);
  for (size_t i = 0; i < pi.size(); ++i) CHECK(pi[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
}

TEST_CASE("exner scaling property") {
  MeshComplex mesh(2, 2, 2, 4.0, 4.0);
  PhysConstants c;
  std::vector<double> theta(mesh.quad_count());
  for (int q = 0; q < mesh.quad_count(); ++q) theta[q] = 280.0 + mesh.quad_z(q);
  const double lambda = 1.7;
  std::vector<double> scaled = theta;
  for (double& v : scaled) v *= lambda;
  const auto p1 = mesh.eval(Space::Q, exner(mesh, project_q(mesh, theta), c));
  const auto p2 = mesh.eval(Space::Q, exner(mesh, project_q(mesh, scaled), c));
  const double factor = std::pow(lambda, c.R / c.cv);
  for (int q = 0; q < mesh.quad_count(); ++q)
    CHECK(p2[q] == doctest::Approx(p1[q] * factor).epsilon(1e-11));
}

TEST_CASE("exner rejects non-positive Theta") {
  MeshComplex mesh(1, 1, 1, 1.0, 1.0);
  PhysConstants c;
  std::vector<double> bad = {-1.0};
  CHECK_THROWS_AS(exner(mesh, bad, c), DomainError);
}

TEST_CASE("bernoulli trivial cases") {
  MeshComplex mesh(2, 2, 2, 3.0, 3.0);
  std::vector<double> v(mesh.dim(Space::UPar), 0.0), w(mesh.dim(Space::UPerp), 0.0);

  // u = 0, g = 0
  for (double x : bernoulli(mesh, v, w, 0.0)) CHECK(x == 0.0);

  // u = 0: Phi = g * projection of z
  const auto phi_g = bernoulli(mesh, v, w, 9.80616);
  const auto z_proj = mesh.height_q();
  for (size_t i = 0; i < phi_g.size(); ++i)
    CHECK(phi_g[i] == doctest::Approx(9.80616 * z_proj[i]).epsilon(1e-12));

  // uniform v = 2, g = 0: Phi == 2 everywhere
  std::vector<double> twos(mesh.quad_count(), 2.0);
  const auto v2 = mesh.project_div_par(twos);
  for (double x : mesh.eval(Space::Q, bernoulli(mesh, v2, w, 0.0)))
    CHECK(x == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("total energy: constant-field identities") {
  PhysConstants c;
  MeshComplex mesh(2, 2, 2, 1.0, 1.0);
  const double area = 1.0;
  std::vector<double> v(mesh.dim(Space::UPar), 0.0), w(mesh.dim(Space::UPerp), 0.0);
  std::vector<double> rho_one(mesh.quad_count(), 1.0);
  std::vector<double> theta_unit(mesh.quad_count(), c.p0 / c.R);
  const auto rho = project_q(mesh, rho_one);
  const auto theta = project_q(mesh, theta_unit);

  PhysConstants c0 = c;
  c0.g = 0.0;
  const EnergyBreakdown e0 = total_energy(mesh, v, w, rho, theta, c0);
  CHECK(e0.kinetic == 0.0);
  CHECK(e0.potential == 0.0);
  // I = (cv/cp) Theta cp |Omega| = cv (p0/R) |Omega|
  CHECK(e0.internal == doctest::Approx(c.cv * c.p0 / c.R * area).epsilon(1e-13));

  // rho = 1, u = 0: P = g * integral of z = g/2 on the unit box
  const EnergyBreakdown e1 = total_energy(mesh, v, w, rho, theta, c);
  CHECK(e1.potential == doctest::Approx(c.g * 0.5).epsilon(1e-13));
  CHECK(e1.total() == doctest::Approx(e1.kinetic + e1.potential + e1.internal));
}

TEST_CASE("total energy matches over-integration oracle on smooth states") {
  PhysConstants c;
  MeshComplex mesh(3, 3, 3, 100.0, 80.0);
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  std::vector<double> vq(mesh.quad_count()), wq(mesh.quad_count()), rq(mesh.quad_count()),
      tq(mesh.quad_count());
  for (int q = 0; q < mesh.quad_count(); ++q) {
    const double x = mesh.quad_x(q) / mesh.Lx(), z = mesh.quad_z(q) / mesh.Lz();
    vq[q] = std::sin(2 * M_PI * x) + dist(rng);
    wq[q] = z * (1 - z) + dist(rng);
    rq[q] = 1.0 + 0.1 * std::cos(2 * M_PI * x) * z;
    tq[q] = 300.0 * (1.0 + 0.05 * z);
  }
  const auto v = mesh.project_div_par(vq);
  auto w = mesh.project_div_perp(wq);
  mesh.zero_walls(w);
  const auto rho = project_q(mesh, rq);
  const auto theta = project_q(mesh, tq);

  // with the model (collocated) rule the scheme's H; the over-integrated
  // value is the diagnostics oracle for the same coefficient state
  const EnergyBreakdown e_model = total_energy(mesh, v, w, rho, theta, c, false);
  const EnergyBreakdown e_over = total_energy(mesh, v, w, rho, theta, c, true);

  // independent oracle: dense Gauss-Legendre evaluation in test code
  QuadRule dense;
  gauss_legendre(mesh.degree() + 6, dense.x, dense.w);
  std::vector<double> xs, zs, ws;
  mesh.quad_geometry(dense, xs, zs, ws);
  const auto vv = mesh.eval_on(dense, Space::UPar, v);
  const auto wv = mesh.eval_on(dense, Space::UPerp, w);
  const auto rv = mesh.eval_on(dense, Space::Q, rho);
  const auto tv = mesh.eval_on(dense, Space::Q, theta);
  double K = 0, P = 0, I = 0;
  for (size_t q = 0; q < ws.size(); ++q) {
    K += ws[q] * 0.5 * rv[q] * (vv[q] * vv[q] + wv[q] * wv[q]);
    P += ws[q] * rv[q] * c.g * zs[q];
    I += ws[q] * (c.cv / c.cp) * tv[q] * c.cp * std::pow(c.R * tv[q] / c.p0, c.R / c.cv);
  }
  CHECK(e_over.kinetic == doctest::Approx(K).epsilon(1e-10));
  CHECK(e_over.potential == doctest::Approx(P).epsilon(1e-12));
  CHECK(e_over.internal == doctest::Approx(I).epsilon(1e-10));
  // the model rule is inexact but close on smooth states
  CHECK(e_model.total() == doctest::Approx(e_over.total()).epsilon(1e-3));
}

TEST_CASE("downwind coordinate") {
  const NodalBasis basis(3);

  SUBCASE("zero velocity leaves the coordinate unchanged") {
    std::vector<double> wr(4, 0.0);
    CHECK(downwind_coord(basis, 0.3, wr, 0.2, 0.5) == doctest::Approx(0.3));
  }
  SUBCASE("constant local velocity 1 with dt = 0.2 shifts by 0.1") {
    std::vector<double> wr(4, 1.0);
    CHECK(downwind_coord(basis, 0.0, wr, 0.2, 0.5) == doctest::Approx(0.1).epsilon(1e-14));
  }
  SUBCASE("linear-in-zeta velocity matches hand evaluation") {
    // w_ref(zeta) = 2 + zeta via nodal values
    std::vector<double> wr(4);
    for (int j = 0; j < 4; ++j) wr[j] = 2.0 + basis.nodes()[j];
    for (double zeta : {-0.7, 0.1, 0.6}) {
      const double expect = std::clamp(zeta + 0.5 * 0.1 * (2.0 + zeta), -1.0, 1.0);
      CHECK(downwind_coord(basis, zeta, wr, 0.1, 0.5) == doctest::Approx(expect).epsilon(1e-13));
    }
  }
  SUBCASE("clamped to the element") {
    std::vector<double> wr(4, 100.0);
    CHECK(downwind_coord(basis, 0.5, wr, 1.0, 0.5) == 1.0);
    for (double& v : wr) v = -100.0;
    CHECK(downwind_coord(basis, -0.5, wr, 1.0, 0.5) == -1.0);
  }
}

TEST_CASE("diagnose_theta") {
  MeshComplex mesh(2, 4, 3, 10.0, 20.0);
  PhysConstants c;
  (void)c;
  std::vector<double> w0(mesh.dim(Space::UPerp), 0.0);

  SUBCASE("Theta = c rho gives theta == c with and without upwinding") {
    std::vector<double> rq(mesh.quad_count());
    for (int q = 0; q < mesh.quad_count(); ++q)
      rq[q] = 1.0 + 0.2 * std::sin(2 * M_PI * mesh.quad_x(q) / mesh.Lx()) +
              0.1 * mesh.quad_z(q) / mesh.Lz();
    const auto rho = project_q(mesh, rq);
    std::vector<double> tq = mesh.eval(Space::Q, rho);
    for (double& v : tq) v *= 7.5;
    const auto theta_density = project_q(mesh, tq);

    // moving w for the upwinded variant
    std::vector<double> wvals(mesh.quad_count());
    for (int q = 0; q < mesh.quad_count(); ++q)
      wvals[q] = mesh.quad_z(q) * (mesh.Lz() - mesh.quad_z(q)) / (mesh.Lz() * mesh.Lz()) * 4.0;
    auto w = mesh.project_div_perp(wvals);
    mesh.zero_walls(w);

    for (bool up : {false, true}) {
      const auto th = diagnose_theta(mesh, rho, theta_density, up, w, 0.5);
      for (double v : th.at_quad) CHECK(v == doctest::Approx(7.5).epsilon(1e-11));
    }
  }

  SUBCASE("upwind with zero velocity equals the centred diagnosis") {
    std::vector<double> rq(mesh.quad_count(), 1.1), tq(mesh.quad_count());
    for (int q = 0; q < mesh.quad_count(); ++q)
      tq[q] = 300.0 + 40.0 * std::tanh((mesh.quad_z(q) - 10.0) / 2.0);
    const auto rho = project_q(mesh, rq);
    const auto theta_density = project_q(mesh, tq);
    const auto a = diagnose_theta(mesh, rho, theta_density, false, w0, 0.3);
    const auto b = diagnose_theta(mesh, rho, theta_density, true, w0, 0.3);
    for (size_t i = 0; i < a.coeffs.size(); ++i)
      CHECK(a.coeffs[i] == doctest::Approx(b.coeffs[i]).epsilon(1e-13));
  }

  SUBCASE("upwinding reduces the overshoot of a sharp profile under rising flow") {
    std::vector<double> rq(mesh.quad_count(), 1.0), tq(mesh.quad_count());
    for (int q = 0; q < mesh.quad_count(); ++q)
      tq[q] = 300.0 + 5.0 * (1.0 + std::tanh((mesh.quad_z(q) - 8.7) / 0.4));
    const auto rho = project_q(mesh, rq);
    const auto theta_density = project_q(mesh, tq);
    std::vector<double> wvals(mesh.quad_count(), 2.0);
    auto w = mesh.project_div_perp(wvals);
    mesh.zero_walls(w);

    const auto centred = diagnose_theta(mesh, rho, theta_density, false, w, 0.25);
    const auto upwinded = diagnose_theta(mesh, rho, theta_density, true, w, 0.25);

    // overshoot lives between collocation points; measure on a dense rule
    QuadRule dense;
    gauss_legendre(12, dense.x, dense.w);
    const auto cvals = mesh.eval_on(dense, Space::UPerp, centred.coeffs);
    const auto uvals = mesh.eval_on(dense, Space::UPerp, upwinded.coeffs);
    double max_c = 0.0, max_u = 0.0;
    for (size_t q = 0; q < cvals.size(); ++q) {
      max_c = std::max(max_c, cvals[q] - 310.0);
      max_u = std::max(max_u, uvals[q] - 310.0);
    }
    CHECK(max_c > 1e-4);  // the centred solve overshoots a sharp front
    CHECK(max_u < max_c);
  }

  SUBCASE("rho must be positive") {
    std::vector<double> rho(mesh.dim(Space::Q), 0.0);
    std::vector<double> theta_density(mesh.dim(Space::Q), 1.0);
    CHECK_THROWS_AS(diagnose_theta(mesh, rho, theta_density, false, w0, 0.1), DomainError);
  }
}

TEST_CASE("entropy diagnostic") {
  MeshComplex mesh(2, 2, 2, 2.0, 2.0);
  PhysConstants c;
  std::vector<double> rho(mesh.quad_count(), 1.0);

  std::vector<double> theta_one(mesh.quad_count(), 1.0);
  CHECK(entropy_diagnostic(mesh, theta_one, rho, c, 0.0) == doctest::Approx(0.0));

  std::vector<double> theta_e(mesh.quad_count(), std::exp(1.0));
  CHECK(entropy_diagnostic(mesh, theta_e, rho, c, 0.0) ==
        doctest::Approx(c.cp * 4.0).epsilon(1e-13));  // cp * |Omega|

  std::vector<double> bad(mesh.quad_count(), -1.0);
  CHECK_THROWS_AS(entropy_diagnostic(mesh, bad, rho, c, 0.0), DomainError);
}
