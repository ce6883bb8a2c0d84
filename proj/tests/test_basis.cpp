#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hevi/basis.hpp"

using namespace hevi;

namespace {

// reference quadrature of f over [a, b] with a dense 64-point Gauss rule
template <typename F>
double integrate(F f, double a, double b) {
  std::vector<double> x, w;
  gauss_legendre(64, x, w);
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += w[i] * f(a + (b - a) * 0.5 * (x[i] + 1.0));
  return s * (b - a) * 0.5;
}

}  // namespace

TEST_CASE("gll nodes and weights, low degrees") {
  const NodalBasis b1(1);
  CHECK(b1.nodes()[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(b1.nodes()[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b1.weights()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b1.weights()[1] == doctest::Approx(1.0).epsilon(1e-15));

  const NodalBasis b2(2);
  CHECK(b2.nodes()[1] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(b2.weights()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(b2.weights()[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(b2.weights()[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  // interior p=3 nodes are the roots of P3' at +-sqrt(1/5)
  const NodalBasis b3(3);
  CHECK(b3.nodes()[1] == doctest::Approx(-std::sqrt(0.2)).epsilon(1e-14));
  CHECK(b3.nodes()[2] == doctest::Approx(std::sqrt(0.2)).epsilon(1e-14));
}

TEST_CASE("gll structural invariants") {
  for (int p = 1; p <= 8; ++p) {
    const NodalBasis b(p);
    double wsum = 0.0;
    for (double w : b.weights()) wsum += w;
    CHECK(wsum == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(b.nodes().front() == -1.0);
    CHECK(b.nodes().back() == 1.0);
    for (int i = 0; i <= p; ++i)
      CHECK(b.nodes()[i] == doctest::Approx(-b.nodes()[p - i]).epsilon(1e-15));
    // Kronecker property
    for (int j = 0; j <= p; ++j)
      for (int i = 0; i <= p; ++i)
        CHECK(b.lagrange(j, b.nodes()[i]) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-13));
  }
}

TEST_CASE("rejects degree zero") { CHECK_THROWS_AS(NodalBasis(0), ConfigError); }

TEST_CASE("quadrature integrates monomials up to degree 2p-1") {
  for (int p = 1; p <= 6; ++p) {
    const NodalBasis b(p);
    for (int m = 0; m <= 2 * p - 1; ++m) {
      double s = 0.0;
      for (int i = 0; i <= p; ++i) s += b.weights()[i] * std::pow(b.nodes()[i], m);
      const double exact = (m % 2 == 0) ? 2.0 / (m + 1) : 0.0;
      CHECK(s == doctest::Approx(exact).epsilon(1e-13));
    }
  }
}

TEST_CASE("differentiation matrix reproduces polynomial derivatives") {
  for (int p = 2; p <= 6; ++p) {
    const NodalBasis b(p);
    // f(x) = sum_k c_k x^k of degree p
    std::vector<double> c(p + 1);
    for (int k = 0; k <= p; ++k) c[k] = 1.0 / (k + 1.5);
    for (int i = 0; i <= p; ++i) {
      double fd = 0.0;
      for (int j = 0; j <= p; ++j) {
        double fj = 0.0;
        for (int k = 0; k <= p; ++k) fj += c[k] * std::pow(b.nodes()[j], k);
        fd += b.diff()(i, j) * fj;
      }
      double exact = 0.0;
      for (int k = 1; k <= p; ++k) exact += k * c[k] * std::pow(b.nodes()[i], k - 1);
      CHECK(fd == doctest::Approx(exact).epsilon(1e-13));
    }
  }
}

TEST_CASE("edge basis: p=1 is the constant half") {
  const NodalBasis b(1);
  const EdgeBasis e(b);
  for (double x : {-0.9, -0.3, 0.0, 0.5, 1.0})
    CHECK(e.eval(0, x) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("edge basis histopolation: interval integrals are Kronecker") {
  for (int p = 1; p <= 5; ++p) {
    const NodalBasis b(p);
    const EdgeBasis e(b);
    for (int j = 0; j < p; ++j)
      for (int k = 0; k < p; ++k) {
        const double v = integrate([&](double x) { return e.eval(j, x); }, b.nodes()[k], b.nodes()[k + 1]);
        CHECK(v == doctest::Approx(j == k ? 1.0 : 0.0).epsilon(1e-12));
      }
  }
}

TEST_CASE("incidence relation l_i' = e_{i-1} - e_i (0-based edges)") {
  for (int p = 1; p <= 5; ++p) {
    const NodalBasis b(p);
    const EdgeBasis e(b);
    for (double x : {-0.77, -0.21, 0.11, 0.63, 0.98}) {
      for (int i = 0; i <= p; ++i) {
        const double lhs = b.lagrange_deriv(i, x);
        const double rhs = (i > 0 ? e.eval(i - 1, x) : 0.0) - (i < p ? e.eval(i, x) : 0.0);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("temporal pair") {
  const TemporalPair t{0.25};
  CHECK(t.e1() == doctest::Approx(4.0));
  CHECK(t.edge_mass() == doctest::Approx(4.0));  // integral of e1^2 over the step = 1/dt
  for (double s : {0.0, 0.1, 0.2, 0.25}) {
    CHECK(t.l0(s) + t.l1(s) == doctest::Approx(1.0).epsilon(1e-15));
  }
  // d l1/dt = e1, d l0/dt = -e1 by construction of the linear pair
  const double h = 1e-6;
  CHECK((t.l1(0.1 + h) - t.l1(0.1 - h)) / (2 * h) == doctest::Approx(t.e1()).epsilon(1e-8));
  CHECK((t.l0(0.1 + h) - t.l0(0.1 - h)) / (2 * h) == doctest::Approx(-t.e1()).epsilon(1e-8));
}
