#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hevi/basis.hpp"
#include "hevi/numkit.hpp"

// Structured x-periodic, z-walled quadrilateral mesh on an x-z slice,
// carrying the discrete function spaces
//
//   P  : nodal x nodal   (H1, potential-vorticity diagnostics)
//   UPar : nodal(x) x edge(z), horizontal flux component v
//   UPerp: edge(x) x nodal(z), vertical flux component w
//   Q  : edge x edge     (L2 densities)
//
// together with the incidence matrices of the complex P -> U -> Q. Basis
// functions carry 2/dx, 2/dz form factors so that the divergence and rotated
// gradient act as pure +-1 integer matrices on coefficient vectors.

namespace hevi {

enum class Space { P, UPar, UPerp, Q };

struct Field {
  Space space;
  std::vector<double> coeffs;
  std::string units;
};

// A tensor-product quadrature rule instantiated on every element.
struct QuadRule {
  std::vector<double> x, w;  // 1D points/weights on [-1,1], same in both dirs
  int points_per_dim() const { return static_cast<int>(x.size()); }
};

class MeshComplex {
 public:
  MeshComplex(int nx, int nz, int p, double Lx, double Lz);
  ~MeshComplex();
  MeshComplex(const MeshComplex&) = delete;
  MeshComplex& operator=(const MeshComplex&) = delete;
  MeshComplex(MeshComplex&&) = default;
  MeshComplex& operator=(MeshComplex&&) = default;

  int nx() const { return nx_; }
  int nz() const { return nz_; }
  int degree() const { return p_; }
  double Lx() const { return Lx_; }
  double Lz() const { return Lz_; }
  double dx() const { return dx_; }
  double dz() const { return dz_; }
  const NodalBasis& basis() const { return basis_; }

  int dim(Space s) const;

  // --- dof indexing -------------------------------------------------------
  int n_xnodes() const { return nxp_; }   // periodic
  int n_xedges() const { return nxp_; }
  int n_znodes() const { return nnz_; }   // nz*p + 1
  int n_zedges() const { return nez_; }

  int pdof(int ix, int jn) const { return ix * nnz_ + jn; }
  int vdof(int ix, int je) const { return ix * nez_ + je; }
  int wdof(int ie, int jn) const { return ie * nnz_ + jn; }
  int qdof(int ie, int je) const { return ie * nez_ + je; }

  bool is_wall_wdof(int dof) const {
    const int jn = dof % nnz_;
    return jn == 0 || jn == nnz_ - 1;
  }
  void zero_walls(std::span<double> w_coeffs) const;

  // --- model quadrature (GLL collocation) ---------------------------------
  int quad_count() const { return nq_; }
  double quad_x(int q) const { return qx_[q]; }
  double quad_z(int q) const { return qz_[q]; }
  double quad_w(int q) const { return qw_[q]; }
  const std::vector<double>& quad_z_all() const { return qz_; }

  double integrate(std::span<const double> f_at_quad) const;

  // e_j evaluated at the model rule's j-th 1D point (reference element).
  double edge_value(int j, int a) const { return edge_tab_[j * (p_ + 1) + a]; }

  // Values of a coefficient vector at the model quadrature points. For the
  // flux spaces this is the physical component value (v or w).
  void eval(Space s, std::span<const double> coeffs, std::span<double> out) const;
  std::vector<double> eval(Space s, std::span<const double> coeffs) const;

  // out[dof] = sum_q W_q basis_dof(q) f(q)
  void assemble(Space s, std::span<const double> f_at_quad, std::span<double> out) const;
  std::vector<double> assemble(Space s, std::span<const double> f_at_quad) const;

  // Gradient of a P-space function at quadrature points, and its adjoint
  // assembly <dpsi/dx, fx> + <dpsi/dz, fz>.
  void eval_grad_p(std::span<const double> coeffs, std::span<double> out_dx, std::span<double> out_dz) const;
  std::vector<double> assemble_grad_p(std::span<const double> fx, std::span<const double> fz) const;

  // --- mass operators ------------------------------------------------------
  // Block-direct solve of <basis, weight basis> x = rhs under the model rule.
  // weight_at_quad == nullptr means weight == 1 (factorisations cached).
  std::vector<double> mass_solve(Space s, std::span<const double> rhs,
                                 const double* weight_at_quad = nullptr) const;

  // y = <basis, weight u_h>, i.e. the (weighted) mass matrix applied to
  // coefficients, computed as eval -> scale -> assemble.
  std::vector<double> mass_apply(Space s, std::span<const double> coeffs,
                                 const double* weight_at_quad = nullptr) const;

  // Explicit (symmetric) mass matrix, optionally weighted; any rule.
  numkit::SparseMatrix mass_matrix(Space s, const double* weight_at_quad = nullptr) const;

  // --- incidence -----------------------------------------------------------
  const numkit::IntSparse& div_par() const { return div_par_; }      // Q x UPar
  const numkit::IntSparse& div_perp() const { return div_perp_; }    // Q x UPerp
  const numkit::IntSparse& rotgrad_par() const { return rg_par_; }   // UPar x P
  const numkit::IntSparse& rotgrad_perp() const { return rg_perp_; } // UPerp x P
  const numkit::IntSparse& e10_x() const { return e10x_; }
  const numkit::IntSparse& e10_z() const { return e10z_; }

  // True iff div o rotgrad vanishes identically in integer arithmetic.
  bool incidence_nilpotency_check() const;

  // --- projections and diagnostics ----------------------------------------
  // L2 projection of a pointwise vector field (components sampled at the
  // model quadrature points) onto U = UPar + UPerp, via CG (Eq. of Galerkin
  // orthogonality <beta, P[v] - v> = 0 under the model rule).
  std::vector<double> project_div_par(std::span<const double> vx_at_quad) const;
  std::vector<double> project_div_perp(std::span<const double> vz_at_quad) const;

  // Scalar potential vorticity q in P from u = (v, w) and density rho:
  // <psi, rho q> = <dpsi/dz, v> - <dpsi/dx, w>. rho must be positive at
  // quadrature points.
  std::vector<double> weak_curl_pv(std::span<const double> v_coeffs, std::span<const double> w_coeffs,
                                   std::span<const double> rho_at_quad) const;

  // Q-space coefficients of the height field z.
  const std::vector<double>& height_q() const { return z_q_coeffs_; }

  // --- over-integration (diagnostics only) ---------------------------------
  QuadRule overint_rule() const;  // Gauss-Legendre with p+3 points per dim
  // Quadrature geometry and field values under an arbitrary rule.
  void quad_geometry(const QuadRule& rule, std::vector<double>& x, std::vector<double>& z,
                     std::vector<double>& w) const;
  std::vector<double> eval_on(const QuadRule& rule, Space s, std::span<const double> coeffs) const;

  Field make_field(Space s, std::string units = {}) const;

 private:
  struct BlockSolver;

  void build_incidence();
  void build_tables();
  void build_mass_cache();
  BlockSolver build_blocks(Space s, const double* weight) const;

  int nx_, nz_, p_;
  double Lx_, Lz_, dx_, dz_;
  NodalBasis basis_;
  EdgeBasis edge_;

  int nxp_, nnz_, nez_, nq_;
  std::vector<double> qx_, qz_, qw_;

  // reference-element tables at the model quadrature points:
  // nodal_tab_[i*(p+1)+a] = l_i(xi_a), edge_tab_[j*(p+1)+a] = e_j(xi_a),
  // deriv_tab_[i*(p+1)+a] = l_i'(xi_a)
  std::vector<double> nodal_tab_, edge_tab_, deriv_tab_;

  numkit::IntSparse div_par_, div_perp_, rg_par_, rg_perp_, e10x_, e10z_;

  std::unique_ptr<BlockSolver> mass_p_, mass_q_, mass_upar_, mass_uperp_;
  numkit::SparseMatrix csr_upar_, csr_uperp_;  // for the CG projection path

  std::vector<double> z_q_coeffs_;
};

}  // namespace hevi
