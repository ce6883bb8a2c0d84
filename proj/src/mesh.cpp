#include "hevi/mesh.hpp"

#include <algorithm>
#include <cmath>

namespace hevi {

struct MeshComplex::BlockSolver {
  // Diagonal fast path (P space) or a set of independent dense blocks.
  std::vector<double> diag;
  struct Block {
    std::vector<int> dofs;
    std::unique_ptr<numkit::LuFactor> lu;
  };
  std::vector<Block> blocks;

  std::vector<double> solve(std::span<const double> rhs) const {
    std::vector<double> x(rhs.begin(), rhs.end());
    if (!diag.empty()) {
      for (size_t i = 0; i < x.size(); ++i) x[i] /= diag[i];
      return x;
    }
    std::vector<double> local;
    for (const auto& b : blocks) {
      local.resize(b.dofs.size());
      for (size_t k = 0; k < b.dofs.size(); ++k) local[k] = rhs[b.dofs[k]];
      b.lu->solve_in_place(local);
      for (size_t k = 0; k < b.dofs.size(); ++k) x[b.dofs[k]] = local[k];
    }
    return x;
  }
};

MeshComplex::~MeshComplex() = default;

MeshComplex::MeshComplex(int nx, int nz, int p, double Lx, double Lz)
    : nx_(nx), nz_(nz), p_(p), Lx_(Lx), Lz_(Lz), basis_(p), edge_(basis_) {
  if (nx < 1 || nz < 1) throw ConfigError("MeshComplex: element counts must be >= 1");
  if (p < 1) throw ConfigError("MeshComplex: polynomial degree must be >= 1");
  if (!(Lx > 0.0) || !(Lz > 0.0)) throw ConfigError("MeshComplex: domain extents must be positive");
  dx_ = Lx / nx;
  dz_ = Lz / nz;
  nxp_ = nx_ * p_;
  nnz_ = nz_ * p_ + 1;
  nez_ = nz_ * p_;
  nq_ = nx_ * nz_ * (p_ + 1) * (p_ + 1);

  build_tables();
  build_incidence();
  build_mass_cache();
  csr_upar_ = mass_matrix(Space::UPar);
  csr_uperp_ = mass_matrix(Space::UPerp);

  z_q_coeffs_ = mass_solve(Space::Q, assemble(Space::Q, qz_));
}

int MeshComplex::dim(Space s) const {
  switch (s) {
    case Space::P:
      return nxp_ * nnz_;
    case Space::UPar:
      return nxp_ * nez_;
    case Space::UPerp:
      return nxp_ * nnz_;
    case Space::Q:
      return nxp_ * nez_;
  }
  return 0;
}

void MeshComplex::zero_walls(std::span<double> w_coeffs) const {
  for (int ie = 0; ie < nxp_; ++ie) {
    w_coeffs[wdof(ie, 0)] = 0.0;
    w_coeffs[wdof(ie, nnz_ - 1)] = 0.0;
  }
}

void MeshComplex::build_tables() {
  const int np = p_ + 1;
  qx_.resize(nq_);
  qz_.resize(nq_);
  qw_.resize(nq_);
  for (int ex = 0; ex < nx_; ++ex)
    for (int ez = 0; ez < nz_; ++ez) {
      const int qbase = (ex * nz_ + ez) * np * np;
      for (int a = 0; a < np; ++a)
        for (int b = 0; b < np; ++b) {
          const int q = qbase + a * np + b;
          qx_[q] = ex * dx_ + dx_ * 0.5 * (basis_.nodes()[a] + 1.0);
          qz_[q] = ez * dz_ + dz_ * 0.5 * (basis_.nodes()[b] + 1.0);
          qw_[q] = basis_.weights()[a] * basis_.weights()[b] * (dx_ * 0.5) * (dz_ * 0.5);
        }
    }

  // Collocated tables: nodal values are Kronecker deltas; edge values follow
  // exactly from column sums of the differentiation matrix.
  nodal_tab_.assign(np * np, 0.0);
  deriv_tab_.assign(np * np, 0.0);
  edge_tab_.assign(p_ * np, 0.0);
  for (int i = 0; i < np; ++i)
    for (int a = 0; a < np; ++a) {
      nodal_tab_[i * np + a] = (i == a) ? 1.0 : 0.0;
      deriv_tab_[i * np + a] = basis_.diff()(a, i);
    }
  for (int j = 0; j < p_; ++j)
    for (int a = 0; a < np; ++a) {
      double s = 0.0;
      for (int i = 0; i <= j; ++i) s += basis_.diff()(a, i);
      edge_tab_[j * np + a] = -s;
    }
}

void MeshComplex::build_incidence() {
  e10x_ = numkit::IntSparse(nxp_, nxp_);
  for (int r = 0; r < nxp_; ++r) {
    e10x_.add(r, r, -1);
    e10x_.add(r, (r + 1) % nxp_, +1);
  }
  e10x_.finalize();

  e10z_ = numkit::IntSparse(nez_, nnz_);
  for (int r = 0; r < nez_; ++r) {
    e10z_.add(r, r, -1);
    e10z_.add(r, r + 1, +1);
  }
  e10z_.finalize();

  div_par_ = numkit::IntSparse(dim(Space::Q), dim(Space::UPar));
  for (int ie = 0; ie < nxp_; ++ie)
    for (int k = e10x_.row_ptr()[ie]; k < e10x_.row_ptr()[ie + 1]; ++k) {
      const int ix = e10x_.col_idx()[k];
      const long long v = e10x_.values()[k];
      for (int je = 0; je < nez_; ++je) div_par_.add(qdof(ie, je), vdof(ix, je), v);
    }
  div_par_.finalize();

  div_perp_ = numkit::IntSparse(dim(Space::Q), dim(Space::UPerp));
  for (int ie = 0; ie < nxp_; ++ie)
    for (int je = 0; je < nez_; ++je)
      for (int k = e10z_.row_ptr()[je]; k < e10z_.row_ptr()[je + 1]; ++k)
        div_perp_.add(qdof(ie, je), wdof(ie, e10z_.col_idx()[k]), e10z_.values()[k]);
  div_perp_.finalize();

  rg_par_ = numkit::IntSparse(dim(Space::UPar), dim(Space::P));
  for (int ix = 0; ix < nxp_; ++ix)
    for (int je = 0; je < nez_; ++je)
      for (int k = e10z_.row_ptr()[je]; k < e10z_.row_ptr()[je + 1]; ++k)
        rg_par_.add(vdof(ix, je), pdof(ix, e10z_.col_idx()[k]), -e10z_.values()[k]);
  rg_par_.finalize();

  rg_perp_ = numkit::IntSparse(dim(Space::UPerp), dim(Space::P));
  for (int ie = 0; ie < nxp_; ++ie)
    for (int k = e10x_.row_ptr()[ie]; k < e10x_.row_ptr()[ie + 1]; ++k) {
      const int ix = e10x_.col_idx()[k];
      const long long v = e10x_.values()[k];
      for (int jn = 0; jn < nnz_; ++jn) rg_perp_.add(wdof(ie, jn), pdof(ix, jn), v);
    }
  rg_perp_.finalize();
}

bool MeshComplex::incidence_nilpotency_check() const {
  const numkit::IntSparse c1 = div_par_.multiply(rg_par_);
  const numkit::IntSparse c2 = div_perp_.multiply(rg_perp_);
  numkit::IntSparse sum(dim(Space::Q), dim(Space::P));
  for (int i = 0; i < c1.rows(); ++i)
    for (int k = c1.row_ptr()[i]; k < c1.row_ptr()[i + 1]; ++k) sum.add(i, c1.col_idx()[k], c1.values()[k]);
  for (int i = 0; i < c2.rows(); ++i)
    for (int k = c2.row_ptr()[i]; k < c2.row_ptr()[i + 1]; ++k) sum.add(i, c2.col_idx()[k], c2.values()[k]);
  sum.finalize();
  return sum.is_zero();
}

double MeshComplex::integrate(std::span<const double> f_at_quad) const {
  double s = 0.0;
  for (int q = 0; q < nq_; ++q) s += qw_[q] * f_at_quad[q];
  return s;
}

void MeshComplex::eval(Space s, std::span<const double> coeffs, std::span<double> out) const {
  const int np = p_ + 1;
  const double fx2 = 2.0 / dx_, fz2 = 2.0 / dz_;
  std::fill(out.begin(), out.end(), 0.0);
  for (int ex = 0; ex < nx_; ++ex)
    for (int ez = 0; ez < nz_; ++ez) {
      const int qbase = (ex * nz_ + ez) * np * np;
      for (int a = 0; a < np; ++a)
        for (int b = 0; b < np; ++b) {
          double v = 0.0;
          switch (s) {
            case Space::P:
              // collocated: l_i(xi_a) = delta_ia
              v = coeffs[pdof((ex * p_ + a) % nxp_, ez * p_ + b)];
              break;
            case Space::UPar:
              for (int j = 0; j < p_; ++j)
                v += coeffs[vdof((ex * p_ + a) % nxp_, ez * p_ + j)] * edge_tab_[j * np + b];
              v *= fz2;
              break;
            case Space::UPerp:
              for (int i = 0; i < p_; ++i)
                v += coeffs[wdof(ex * p_ + i, ez * p_ + b)] * edge_tab_[i * np + a];
              v *= fx2;
              break;
            case Space::Q:
              for (int i = 0; i < p_; ++i) {
                const double e = edge_tab_[i * np + a];
                if (e == 0.0) continue;
                for (int j = 0; j < p_; ++j)
                  v += coeffs[qdof(ex * p_ + i, ez * p_ + j)] * e * edge_tab_[j * np + b];
              }
              v *= fx2 * fz2;
              break;
          }
          out[qbase + a * np + b] = v;
        }
    }
}

std::vector<double> MeshComplex::eval(Space s, std::span<const double> coeffs) const {
  std::vector<double> out(nq_);
  eval(s, coeffs, out);
  return out;
}

void MeshComplex::assemble(Space s, std::span<const double> f_at_quad, std::span<double> out) const {
  const int np = p_ + 1;
  const double fx2 = 2.0 / dx_, fz2 = 2.0 / dz_;
  std::fill(out.begin(), out.end(), 0.0);
  for (int ex = 0; ex < nx_; ++ex)
    for (int ez = 0; ez < nz_; ++ez) {
      const int qbase = (ex * nz_ + ez) * np * np;
      for (int a = 0; a < np; ++a)
        for (int b = 0; b < np; ++b) {
          const int q = qbase + a * np + b;
          const double wf = qw_[q] * f_at_quad[q];
          if (wf == 0.0) continue;
          switch (s) {
            case Space::P:
              out[pdof((ex * p_ + a) % nxp_, ez * p_ + b)] += wf;
              break;
            case Space::UPar:
              for (int j = 0; j < p_; ++j)
                out[vdof((ex * p_ + a) % nxp_, ez * p_ + j)] += wf * edge_tab_[j * np + b] * fz2;
              break;
            case Space::UPerp:
              for (int i = 0; i < p_; ++i)
                out[wdof(ex * p_ + i, ez * p_ + b)] += wf * edge_tab_[i * np + a] * fx2;
              break;
            case Space::Q:
              for (int i = 0; i < p_; ++i) {
                const double e = edge_tab_[i * np + a];
                if (e == 0.0) continue;
                for (int j = 0; j < p_; ++j)
                  out[qdof(ex * p_ + i, ez * p_ + j)] += wf * e * edge_tab_[j * np + b] * fx2 * fz2;
              }
              break;
          }
        }
    }
}

std::vector<double> MeshComplex::assemble(Space s, std::span<const double> f_at_quad) const {
  std::vector<double> out(dim(s), 0.0);
  assemble(s, f_at_quad, out);
  return out;
}

void MeshComplex::eval_grad_p(std::span<const double> coeffs, std::span<double> out_dx,
                              std::span<double> out_dz) const {
  const int np = p_ + 1;
  const double fx2 = 2.0 / dx_, fz2 = 2.0 / dz_;
  std::fill(out_dx.begin(), out_dx.end(), 0.0);
  std::fill(out_dz.begin(), out_dz.end(), 0.0);
  for (int ex = 0; ex < nx_; ++ex)
    for (int ez = 0; ez < nz_; ++ez) {
      const int qbase = (ex * nz_ + ez) * np * np;
      for (int a = 0; a < np; ++a)
        for (int b = 0; b < np; ++b) {
          double gx = 0.0, gz = 0.0;
          for (int i = 0; i < np; ++i) {
            // d/dx: l_i'(xi_a) l_j(zeta_b) with j = b collocated
            gx += coeffs[pdof((ex * p_ + i) % nxp_, ez * p_ + b)] * deriv_tab_[i * np + a];
            gz += coeffs[pdof((ex * p_ + a) % nxp_, ez * p_ + i)] * deriv_tab_[i * np + b];
          }
          out_dx[qbase + a * np + b] = gx * fx2;
          out_dz[qbase + a * np + b] = gz * fz2;
        }
    }
}

std::vector<double> MeshComplex::assemble_grad_p(std::span<const double> fx, std::span<const double> fz) const {
  const int np = p_ + 1;
  const double fx2 = 2.0 / dx_, fz2 = 2.0 / dz_;
  std::vector<double> out(dim(Space::P), 0.0);
  for (int ex = 0; ex < nx_; ++ex)
    for (int ez = 0; ez < nz_; ++ez) {
      const int qbase = (ex * nz_ + ez) * np * np;
      for (int a = 0; a < np; ++a)
        for (int b = 0; b < np; ++b) {
          const int q = qbase + a * np + b;
          const double wx = qw_[q] * fx[q] * fx2;
          const double wz = qw_[q] * fz[q] * fz2;
          for (int i = 0; i < np; ++i) {
            out[pdof((ex * p_ + i) % nxp_, ez * p_ + b)] += wx * deriv_tab_[i * np + a];
            out[pdof((ex * p_ + a) % nxp_, ez * p_ + i)] += wz * deriv_tab_[i * np + b];
          }
        }
    }
  return out;
}

MeshComplex::BlockSolver MeshComplex::build_blocks(Space s, const double* weight) const {
  const int np = p_ + 1;
  const double fx2 = 2.0 / dx_, fz2 = 2.0 / dz_;
  BlockSolver bs;
  auto wq = [&](int q) { return weight ? qw_[q] * weight[q] : qw_[q]; };

  if (s == Space::P) {
    bs.diag.assign(dim(Space::P), 0.0);
    for (int ex = 0; ex < nx_; ++ex)
      for (int ez = 0; ez < nz_; ++ez) {
        const int qbase = (ex * nz_ + ez) * np * np;
        for (int a = 0; a < np; ++a)
          for (int b = 0; b < np; ++b)
            bs.diag[pdof((ex * p_ + a) % nxp_, ez * p_ + b)] += wq(qbase + a * np + b);
      }
    for (double d : bs.diag)
      if (!(d > 0.0)) throw NumericError("mass_solve: non-positive nodal mass entry");
    return bs;
  }

  // accumulate dense blocks keyed by block id
  int nblocks = 0, bsize = 0;
  std::vector<numkit::DenseMatrix> mats;
  std::vector<std::vector<int>> dofs;

  if (s == Space::Q) {
    nblocks = nx_ * nz_;
    bsize = p_ * p_;
    mats.assign(nblocks, numkit::DenseMatrix(bsize, bsize));
    dofs.assign(nblocks, {});
    for (int ex = 0; ex < nx_; ++ex)
      for (int ez = 0; ez < nz_; ++ez) {
        const int el = ex * nz_ + ez;
        auto& dl = dofs[el];
        dl.resize(bsize);
        for (int i = 0; i < p_; ++i)
          for (int j = 0; j < p_; ++j) dl[i * p_ + j] = qdof(ex * p_ + i, ez * p_ + j);
        const int qbase = el * np * np;
        for (int a = 0; a < np; ++a)
          for (int b = 0; b < np; ++b) {
            const double w = wq(qbase + a * np + b) * fx2 * fx2 * fz2 * fz2;
            for (int i = 0; i < p_; ++i)
              for (int j = 0; j < p_; ++j) {
                const double bi = edge_tab_[i * np + a] * edge_tab_[j * np + b];
                if (bi == 0.0) continue;
                for (int i2 = 0; i2 < p_; ++i2)
                  for (int j2 = 0; j2 < p_; ++j2)
                    mats[el](i * p_ + j, i2 * p_ + j2) +=
                        w * bi * edge_tab_[i2 * np + a] * edge_tab_[j2 * np + b];
              }
          }
      }
  } else if (s == Space::UPar) {
    // blocks: (global x-node, z-element), size p (local z-edges); collocation
    // makes the x direction diagonal.
    nblocks = nxp_ * nz_;
    bsize = p_;
    mats.assign(nblocks, numkit::DenseMatrix(bsize, bsize));
    dofs.assign(nblocks, {});
    for (int gx = 0; gx < nxp_; ++gx)
      for (int ez = 0; ez < nz_; ++ez) {
        auto& dl = dofs[gx * nz_ + ez];
        dl.resize(p_);
        for (int j = 0; j < p_; ++j) dl[j] = vdof(gx, ez * p_ + j);
      }
    for (int ex = 0; ex < nx_; ++ex)
      for (int ez = 0; ez < nz_; ++ez) {
        const int qbase = (ex * nz_ + ez) * np * np;
        for (int a = 0; a < np; ++a) {
          const int gx = (ex * p_ + a) % nxp_;
          auto& m = mats[gx * nz_ + ez];
          for (int b = 0; b < np; ++b) {
            const double w = wq(qbase + a * np + b) * fz2 * fz2;
            for (int j = 0; j < p_; ++j) {
              const double e = edge_tab_[j * np + b];
              if (e == 0.0) continue;
              for (int j2 = 0; j2 < p_; ++j2) m(j, j2) += w * e * edge_tab_[j2 * np + b];
            }
          }
        }
      }
  } else {  // UPerp: blocks (x-element, global z-node), size p (local x-edges)
    nblocks = nx_ * nnz_;
    bsize = p_;
    mats.assign(nblocks, numkit::DenseMatrix(bsize, bsize));
    dofs.assign(nblocks, {});
    for (int ex = 0; ex < nx_; ++ex)
      for (int gz = 0; gz < nnz_; ++gz) {
        auto& dl = dofs[ex * nnz_ + gz];
        dl.resize(p_);
        for (int i = 0; i < p_; ++i) dl[i] = wdof(ex * p_ + i, gz);
      }
    for (int ex = 0; ex < nx_; ++ex)
      for (int ez = 0; ez < nz_; ++ez) {
        const int qbase = (ex * nz_ + ez) * np * np;
        for (int b = 0; b < np; ++b) {
          const int gz = ez * p_ + b;
          auto& m = mats[ex * nnz_ + gz];
          for (int a = 0; a < np; ++a) {
            const double w = wq(qbase + a * np + b) * fx2 * fx2;
            for (int i = 0; i < p_; ++i) {
              const double e = edge_tab_[i * np + a];
              if (e == 0.0) continue;
              for (int i2 = 0; i2 < p_; ++i2) m(i, i2) += w * e * edge_tab_[i2 * np + a];
            }
          }
        }
      }
  }

  bs.blocks.reserve(nblocks);
  for (int b = 0; b < nblocks; ++b) {
    BlockSolver::Block blk;
    blk.dofs = std::move(dofs[b]);
    blk.lu = std::make_unique<numkit::LuFactor>(std::move(mats[b]));
    bs.blocks.push_back(std::move(blk));
  }
  return bs;
}

void MeshComplex::build_mass_cache() {
  mass_p_ = std::make_unique<BlockSolver>(build_blocks(Space::P, nullptr));
  mass_q_ = std::make_unique<BlockSolver>(build_blocks(Space::Q, nullptr));
  mass_upar_ = std::make_unique<BlockSolver>(build_blocks(Space::UPar, nullptr));
  mass_uperp_ = std::make_unique<BlockSolver>(build_blocks(Space::UPerp, nullptr));
}

std::vector<double> MeshComplex::mass_solve(Space s, std::span<const double> rhs,
                                            const double* weight_at_quad) const {
  if (weight_at_quad) {
    for (int q = 0; q < nq_; ++q)
      if (!(weight_at_quad[q] > 0.0))
        throw DomainError("mass_solve: weight not strictly positive at a quadrature point");
    return build_blocks(s, weight_at_quad).solve(rhs);
  }
  switch (s) {
    case Space::P:
      return mass_p_->solve(rhs);
    case Space::Q:
      return mass_q_->solve(rhs);
    case Space::UPar:
      return mass_upar_->solve(rhs);
    case Space::UPerp:
      return mass_uperp_->solve(rhs);
  }
  throw NumericError("mass_solve: unknown space");
}

std::vector<double> MeshComplex::mass_apply(Space s, std::span<const double> coeffs,
                                            const double* weight_at_quad) const {
  std::vector<double> vals = eval(s, coeffs);
  if (weight_at_quad)
    for (int q = 0; q < nq_; ++q) vals[q] *= weight_at_quad[q];
  return assemble(s, vals);
}

numkit::SparseMatrix MeshComplex::mass_matrix(Space s, const double* weight_at_quad) const {
  if (weight_at_quad)
    for (int q = 0; q < nq_; ++q)
      if (!(weight_at_quad[q] > 0.0))
        throw DomainError("mass_matrix: weight not strictly positive at a quadrature point");
  const int np = p_ + 1;
  const double fx2 = 2.0 / dx_, fz2 = 2.0 / dz_;
  numkit::SparseMatrix m(dim(s), dim(s));

  // local dof lists and basis values per element
  std::vector<int> ldof;
  std::vector<double> lval;
  for (int ex = 0; ex < nx_; ++ex)
    for (int ez = 0; ez < nz_; ++ez) {
      const int qbase = (ex * nz_ + ez) * np * np;
      for (int a = 0; a < np; ++a)
        for (int b = 0; b < np; ++b) {
          const int q = qbase + a * np + b;
          const double w = qw_[q] * (weight_at_quad ? weight_at_quad[q] : 1.0);
          ldof.clear();
          lval.clear();
          switch (s) {
            case Space::P:
              ldof.push_back(pdof((ex * p_ + a) % nxp_, ez * p_ + b));
              lval.push_back(1.0);
              break;
            case Space::UPar:
              for (int j = 0; j < p_; ++j) {
                ldof.push_back(vdof((ex * p_ + a) % nxp_, ez * p_ + j));
                lval.push_back(edge_tab_[j * np + b] * fz2);
              }
              break;
            case Space::UPerp:
              for (int i = 0; i < p_; ++i) {
                ldof.push_back(wdof(ex * p_ + i, ez * p_ + b));
                lval.push_back(edge_tab_[i * np + a] * fx2);
              }
              break;
            case Space::Q:
              for (int i = 0; i < p_; ++i)
                for (int j = 0; j < p_; ++j) {
                  ldof.push_back(qdof(ex * p_ + i, ez * p_ + j));
                  lval.push_back(edge_tab_[i * np + a] * edge_tab_[j * np + b] * fx2 * fz2);
                }
              break;
          }
          for (size_t r = 0; r < ldof.size(); ++r) {
            if (lval[r] == 0.0) continue;
            for (size_t c = 0; c < ldof.size(); ++c)
              if (lval[c] != 0.0) m.add(ldof[r], ldof[c], w * lval[r] * lval[c]);
          }
        }
    }
  m.finalize();
  return m;
}

std::vector<double> MeshComplex::project_div_par(std::span<const double> vx_at_quad) const {
  // Projections onto the flux spaces are solved iteratively; Jacobi
  // preconditioned CG converges in a few dozen iterations on GLL mass
  // matrices.
  const std::vector<double> rhs = assemble(Space::UPar, vx_at_quad);
  if (numkit::norm2(rhs) == 0.0) return std::vector<double>(dim(Space::UPar), 0.0);
  return numkit::cg_solve(csr_upar_, rhs, 1e-14, 1000).x;
}

std::vector<double> MeshComplex::project_div_perp(std::span<const double> vz_at_quad) const {
  const std::vector<double> rhs = assemble(Space::UPerp, vz_at_quad);
  if (numkit::norm2(rhs) == 0.0) return std::vector<double>(dim(Space::UPerp), 0.0);
  return numkit::cg_solve(csr_uperp_, rhs, 1e-14, 1000).x;
}

std::vector<double> MeshComplex::weak_curl_pv(std::span<const double> v_coeffs,
                                              std::span<const double> w_coeffs,
                                              std::span<const double> rho_at_quad) const {
  for (int q = 0; q < nq_; ++q)
    if (!(rho_at_quad[q] > 0.0)) throw DomainError("weak_curl_pv: rho not positive at a quadrature point");
  const std::vector<double> v_vals = eval(Space::UPar, v_coeffs);
  std::vector<double> w_vals = eval(Space::UPerp, w_coeffs);
  for (double& v : w_vals) v = -v;
  const std::vector<double> rhs = assemble_grad_p(w_vals, v_vals);
  return mass_solve(Space::P, rhs, rho_at_quad.data());
}

QuadRule MeshComplex::overint_rule() const {
  QuadRule r;
  gauss_legendre(p_ + 3, r.x, r.w);
  return r;
}

void MeshComplex::quad_geometry(const QuadRule& rule, std::vector<double>& x, std::vector<double>& z,
                                std::vector<double>& w) const {
  const int nr = rule.points_per_dim();
  const int n = nx_ * nz_ * nr * nr;
  x.resize(n);
  z.resize(n);
  w.resize(n);
  for (int ex = 0; ex < nx_; ++ex)
    for (int ez = 0; ez < nz_; ++ez) {
      const int qbase = (ex * nz_ + ez) * nr * nr;
      for (int a = 0; a < nr; ++a)
        for (int b = 0; b < nr; ++b) {
          const int q = qbase + a * nr + b;
          x[q] = ex * dx_ + dx_ * 0.5 * (rule.x[a] + 1.0);
          z[q] = ez * dz_ + dz_ * 0.5 * (rule.x[b] + 1.0);
          w[q] = rule.w[a] * rule.w[b] * (dx_ * 0.5) * (dz_ * 0.5);
        }
    }
}

std::vector<double> MeshComplex::eval_on(const QuadRule& rule, Space s, std::span<const double> coeffs) const {
  const int nr = rule.points_per_dim();
  const int np = p_ + 1;
  const double fx2 = 2.0 / dx_, fz2 = 2.0 / dz_;
  std::vector<double> nod(np * nr), edg(p_ * nr);
  for (int i = 0; i < np; ++i)
    for (int a = 0; a < nr; ++a) nod[i * nr + a] = basis_.lagrange(i, rule.x[a]);
  for (int j = 0; j < p_; ++j)
    for (int a = 0; a < nr; ++a) edg[j * nr + a] = edge_.eval(j, rule.x[a]);

  std::vector<double> out(nx_ * nz_ * nr * nr, 0.0);
  for (int ex = 0; ex < nx_; ++ex)
    for (int ez = 0; ez < nz_; ++ez) {
      const int qbase = (ex * nz_ + ez) * nr * nr;
      for (int a = 0; a < nr; ++a)
        for (int b = 0; b < nr; ++b) {
          double v = 0.0;
          switch (s) {
            case Space::P:
              for (int i = 0; i < np; ++i)
                for (int j = 0; j < np; ++j)
                  v += coeffs[pdof((ex * p_ + i) % nxp_, ez * p_ + j)] * nod[i * nr + a] * nod[j * nr + b];
              break;
            case Space::UPar:
              for (int i = 0; i < np; ++i)
                for (int j = 0; j < p_; ++j)
                  v += coeffs[vdof((ex * p_ + i) % nxp_, ez * p_ + j)] * nod[i * nr + a] * edg[j * nr + b] * fz2;
              break;
            case Space::UPerp:
              for (int i = 0; i < p_; ++i)
                for (int j = 0; j < np; ++j)
                  v += coeffs[wdof(ex * p_ + i, ez * p_ + j)] * edg[i * nr + a] * fx2 * nod[j * nr + b];
              break;
            case Space::Q:
              for (int i = 0; i < p_; ++i)
                for (int j = 0; j < p_; ++j)
                  v += coeffs[qdof(ex * p_ + i, ez * p_ + j)] * edg[i * nr + a] * edg[j * nr + b] * fx2 * fz2;
              break;
          }
          out[qbase + a * nr + b] = v;
        }
    }
  return out;
}

Field MeshComplex::make_field(Space s, std::string units) const {
  Field f;
  f.space = s;
  f.coeffs.assign(dim(s), 0.0);
  f.units = std::move(units);
  return f;
}

}  // namespace hevi
