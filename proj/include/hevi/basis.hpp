#pragma once

#include <vector>

#include "hevi/errors.hpp"
#include "hevi/numkit.hpp"

// One-dimensional Gauss-Lobatto-Legendre nodal bases and the derived edge
// (histopolation) bases. These underpin both the spatial tensor-product
// spaces and the lowest-order temporal discretisation.

namespace hevi {

class NodalBasis {
 public:
  explicit NodalBasis(int degree);

  int degree() const { return degree_; }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }
  // diff(i, j) = l_j'(node_i)
  const numkit::DenseMatrix& diff() const { return diff_; }

  // Lagrange cardinal polynomial l_j and its derivative at arbitrary x,
  // evaluated with barycentric weights.
  double lagrange(int j, double x) const;
  double lagrange_deriv(int j, double x) const;

 private:
  int degree_;
  std::vector<double> nodes_, weights_, bary_;
  numkit::DenseMatrix diff_;
};

// Edge polynomials e_j = -sum_{i<j} l_i', j = 1..p (0-based j = 0..p-1), so
// that l_i' = e_i - e_{i+1} holds exactly and the integral of e_j over the
// j-th inter-node interval is the Kronecker delta.
class EdgeBasis {
 public:
  explicit EdgeBasis(const NodalBasis& nodal);

  int count() const { return nodal_.degree(); }
  const NodalBasis& nodal() const { return nodal_; }
  double eval(int j, double x) const;

 private:
  NodalBasis nodal_;
};

// Degree-1 temporal pair on [t_n, t_n + dt]: l0, l1 nodal and the single
// edge function e1 = 1/dt, with d l1/dt = e1 and d l0/dt = -e1.
struct TemporalPair {
  double dt;

  double l0(double t_rel) const { return 1.0 - t_rel / dt; }
  double l1(double t_rel) const { return t_rel / dt; }
  double e1() const { return 1.0 / dt; }
  // temporal mass: integral of e1*e1 over the step
  double edge_mass() const { return 1.0 / dt; }
};

// Gauss-Legendre rule with n points on [-1,1]; used by the over-integration
// diagnostics switch.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w);

}  // namespace hevi
