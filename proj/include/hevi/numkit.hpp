#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "hevi/errors.hpp"

// Dense, banded and sparse linear algebra kernels plus the 4x4 complex
// eigensolver. Everything here is reentrant and allocation-explicit; there is
// no global state.

namespace hevi::numkit {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, 0.0) {}

  static DenseMatrix identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(int i, int j) { return a_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<size_t>(i) * cols_ + j]; }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  std::vector<double> apply(std::span<const double> x) const;

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

// Reusable dense LU with partial pivoting. Relative pivot threshold 1e-14
// for singularity detection.
class LuFactor {
 public:
  explicit LuFactor(DenseMatrix a);

  void solve_in_place(std::span<double> b) const;
  std::vector<double> solve(std::span<const double> b) const;

  int size() const { return lu_.rows(); }

 private:
  DenseMatrix lu_;
  std::vector<int> piv_;
};

// Banded square matrix, kl sub- and ku super-diagonals. Storage follows the
// LAPACK band layout with kl extra rows of fill space so the factorization
// can pivot in place.
class BandedMatrix {
 public:
  BandedMatrix(int n, int kl, int ku);

  int size() const { return n_; }
  int lower() const { return kl_; }
  int upper() const { return ku_; }

  bool in_band(int i, int j) const { return i - j <= kl_ && j - i <= ku_; }
  double& at(int i, int j);
  double get(int i, int j) const;
  void add(int i, int j, double v) { at(i, j) += v; }

  std::vector<double> apply(std::span<const double> x) const;

 private:
  friend class BandedLu;
  int n_, kl_, ku_;
  std::vector<double> band_;  // (2*kl + ku + 1) x n, column-major by diagonals
};

class BandedLu {
 public:
  explicit BandedLu(BandedMatrix a);

  void solve_in_place(std::span<double> b) const;
  std::vector<double> solve(std::span<const double> b) const;

 private:
  BandedMatrix lu_;
  std::vector<int> piv_;
};

// Coordinate-built sparse matrix compressed to CSR by finalize(); duplicate
// triplets are summed. apply() requires a finalized matrix.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(int rows, int cols) : rows_(rows), cols_(cols) {}

  void add(int i, int j, double v) { trip_.push_back({i, j, v}); }
  void finalize();
  bool finalized() const { return finalized_; }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int nnz() const { return static_cast<int>(val_.size()); }

  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> apply_transpose(std::span<const double> x) const;
  std::vector<double> diagonal() const;

  // CSR access for tests and for the CG preconditioner.
  const std::vector<int>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return val_; }

 private:
  struct Triplet {
    int i, j;
    double v;
  };
  int rows_ = 0, cols_ = 0;
  bool finalized_ = false;
  std::vector<Triplet> trip_;
  std::vector<int> row_ptr_, col_idx_;
  std::vector<double> val_;
};

// Integer-valued sparse matrix for incidence operators. Entries are held
// exactly so composite products can be checked in integer arithmetic.
class IntSparse {
 public:
  IntSparse() = default;
  IntSparse(int rows, int cols) : rows_(rows), cols_(cols) {}

  void add(int i, int j, long long v);
  void finalize();

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> apply_transpose(std::span<const double> x) const;

  // Exact integer product this * other.
  IntSparse multiply(const IntSparse& other) const;
  bool is_zero() const;
  long long max_abs_entry() const;
  int nnz() const { return static_cast<int>(val_.size()); }
  const std::vector<int>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& col_idx() const { return col_idx_; }
  const std::vector<long long>& values() const { return val_; }

 private:
  struct Triplet {
    int i, j;
    long long v;
  };
  int rows_ = 0, cols_ = 0;
  bool finalized_ = false;
  std::vector<Triplet> trip_;
  std::vector<int> row_ptr_, col_idx_;
  std::vector<long long> val_;
};

std::vector<double> lu_solve(const DenseMatrix& a, std::span<const double> b);
std::vector<double> lu_solve(const BandedMatrix& a, std::span<const double> b);

struct CgResult {
  std::vector<double> x;
  int iterations = 0;
  double relative_residual = 0.0;
};

// Jacobi-preconditioned conjugate gradients for SPD systems. Throws
// NumericError if max_iter is exceeded; the message carries the residual.
CgResult cg_solve(const SparseMatrix& a, std::span<const double> b, double tol, int max_iter);

// Eigenvalues of a complex 4x4 matrix (row-major), returned in deterministic
// order: ascending argument, then ascending modulus. Each root is polished in
// extended precision; |det(A - lambda I)| is the caller-side quality check.
std::array<std::complex<double>, 4> eig4(const std::array<std::complex<double>, 16>& a);

// det(A - lambda I) for a 4x4, used by eig4 self-checks.
std::complex<double> det4_shifted(const std::array<std::complex<double>, 16>& a, std::complex<double> lambda);

double norm2(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);

}  // namespace hevi::numkit
