#include "hevi/basis.hpp"

#include <cmath>

namespace hevi {

namespace {

// Legendre P_p(x) and its first derivative by the three-term recurrence.
void legendre(int p, double x, double& val, double& deriv) {
  double p0 = 1.0, p1 = x;
  if (p == 0) {
    val = 1.0;
    deriv = 0.0;
    return;
  }
  for (int k = 2; k <= p; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  val = p1;
  // (1-x^2) P_p' = p (P_{p-1} - x P_p)
  if (std::abs(x) < 1.0)
    deriv = p * (p0 - x * p1) / (1.0 - x * x);
  else
    deriv = x * p * (p + 1.0) / 2.0 * (p % 2 == 0 ? (x > 0 ? 1.0 : -1.0) : 1.0);
}

}  // namespace

NodalBasis::NodalBasis(int degree) : degree_(degree) {
  if (degree < 1) throw ConfigError("NodalBasis: degree must be >= 1");
  const int n = degree + 1;
  nodes_.resize(n);
  weights_.resize(n);

  nodes_[0] = -1.0;
  nodes_[degree] = 1.0;
  // Interior GLL nodes are the roots of P_p'; Newton from Chebyshev-Lobatto
  // starting values, tolerance 1e-15.
  const double pi = std::acos(-1.0);
  for (int i = 1; i < degree; ++i) {
    double x = -std::cos(pi * i / degree);
    for (int it = 0; it < 100; ++it) {
      double v, d;
      legendre(degree, x, v, d);
      // Newton on f = P_p'(x); f' = P_p'' from the Legendre ODE:
      // (1-x^2) P_p'' = 2x P_p' - p(p+1) P_p
      const double f = d;
      const double fp = (2.0 * x * d - degree * (degree + 1.0) * v) / (1.0 - x * x);
      const double step = f / fp;
      x -= step;
      if (std::abs(step) < 1e-15) break;
    }
    nodes_[i] = x;
  }
  // enforce exact symmetry about the origin
  for (int i = 0; i < n / 2; ++i) {
    const double s = 0.5 * (nodes_[n - 1 - i] - nodes_[i]);
    nodes_[i] = -s;
    nodes_[n - 1 - i] = s;
  }
  if (n % 2 == 1) nodes_[n / 2] = 0.0;

  for (int i = 0; i < n; ++i) {
    double v, d;
    legendre(degree, nodes_[i], v, d);
    weights_[i] = 2.0 / (degree * (degree + 1.0) * v * v);
  }

  // barycentric weights
  bary_.assign(n, 1.0);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      if (k != j) bary_[j] /= (nodes_[j] - nodes_[k]);

  // differentiation matrix D_ij = l_j'(x_i)
  diff_ = numkit::DenseMatrix(n, n);
  for (int i = 0; i < n; ++i) {
    double rowsum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i != j) {
        diff_(i, j) = bary_[j] / (bary_[i] * (nodes_[i] - nodes_[j]));
        rowsum += diff_(i, j);
      }
    }
    diff_(i, i) = -rowsum;  // derivative of the constant is zero
  }
}

double NodalBasis::lagrange(int j, double x) const {
  const int n = degree_ + 1;
  for (int k = 0; k < n; ++k)
    if (x == nodes_[k]) return k == j ? 1.0 : 0.0;
  double num = bary_[j] / (x - nodes_[j]);
  double den = 0.0;
  for (int k = 0; k < n; ++k) den += bary_[k] / (x - nodes_[k]);
  return num / den;
}

double NodalBasis::lagrange_deriv(int j, double x) const {
  const int n = degree_ + 1;
  // l_j'(x) = l_j(x) * sum_{k != j} 1/(x - x_k) away from nodes; at a node use
  // the differentiation-matrix formula generalised to arbitrary x via the
  // product rule on the nodal polynomial.
  for (int i = 0; i < n; ++i) {
    if (x == nodes_[i]) {
      if (i == j) {
        double s = 0.0;
        for (int k = 0; k < n; ++k)
          if (k != j) s += 1.0 / (x - nodes_[k]);
        return s;
      }
      return bary_[j] / (bary_[i] * (nodes_[i] - nodes_[j]));
    }
  }
  const double lj = lagrange(j, x);
  double s = 0.0;
  for (int k = 0; k < n; ++k)
    if (k != j) s += 1.0 / (x - nodes_[k]);
  // lagrange(j,x) can be zero only at nodes, excluded above
  return lj * s;
}

EdgeBasis::EdgeBasis(const NodalBasis& nodal) : nodal_(nodal) {}

double EdgeBasis::eval(int j, double x) const {
  // e_{j+1} = -sum_{i<=j} l_i'  (0-based j)
  double s = 0.0;
  for (int i = 0; i <= j; ++i) s += nodal_.lagrange_deriv(i, x);
  return -s;
}

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < n; ++i) {
    double xi = -std::cos(pi * (i + 0.75) / (n + 0.5));
    double v = 0.0, d = 0.0;
    for (int it = 0; it < 100; ++it) {
      legendre(n, xi, v, d);
      const double step = v / d;
      xi -= step;
      if (std::abs(step) < 1e-15) break;
    }
    legendre(n, xi, v, d);
    x[i] = xi;
    w[i] = 2.0 / ((1.0 - xi * xi) * d * d);
  }
}

}  // namespace hevi
