#include "hevi/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hevi::numkit {

std::vector<double> DenseMatrix::apply(std::span<const double> x) const {
  std::vector<double> y(rows_, 0.0);
  for (int i = 0; i < rows_; ++i) {
    double s = 0.0;
    const double* row = &a_[static_cast<size_t>(i) * cols_];
    for (int j = 0; j < cols_; ++j) s += row[j] * x[j];
    y[i] = s;
  }
  return y;
}

LuFactor::LuFactor(DenseMatrix a) : lu_(std::move(a)), piv_(lu_.rows()) {
  const int n = lu_.rows();
  if (n != lu_.cols()) throw NumericError("LuFactor: matrix must be square");
  double scale = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) scale = std::max(scale, std::abs(lu_(i, j)));
  if (scale == 0.0) throw NumericError("LuFactor: zero matrix");
  for (int k = 0; k < n; ++k) {
    int p = k;
    double best = std::abs(lu_(k, k));
    for (int i = k + 1; i < n; ++i) {
      const double v = std::abs(lu_(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best < 1e-14 * scale) throw NumericError("LuFactor: singular matrix (pivot below threshold)");
    piv_[k] = p;
    if (p != k)
      for (int j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
    const double inv = 1.0 / lu_(k, k);
    for (int i = k + 1; i < n; ++i) {
      const double m = lu_(i, k) * inv;
      lu_(i, k) = m;
      if (m != 0.0)
        for (int j = k + 1; j < n; ++j) lu_(i, j) -= m * lu_(k, j);
    }
  }
}

void LuFactor::solve_in_place(std::span<double> b) const {
  const int n = lu_.rows();
  for (int k = 0; k < n; ++k) {
    if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
    for (int i = k + 1; i < n; ++i) b[i] -= lu_(i, k) * b[k];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < n; ++j) s -= lu_(i, j) * b[j];
    b[i] = s / lu_(i, i);
  }
}

std::vector<double> LuFactor::solve(std::span<const double> b) const {
  std::vector<double> x(b.begin(), b.end());
  solve_in_place(x);
  return x;
}

std::vector<double> lu_solve(const DenseMatrix& a, std::span<const double> b) {
  return LuFactor(a).solve(b);
}

BandedMatrix::BandedMatrix(int n, int kl, int ku)
    : n_(n), kl_(kl), ku_(ku), band_(static_cast<size_t>(2 * kl + ku + 1) * n, 0.0) {}

// Band storage with fill space: entry (i,j) lives at row (kl + ku + i - j) of
// column j; rows [0, kl) hold fill generated by pivoting.
double& BandedMatrix::at(int i, int j) {
  const int r = kl_ + ku_ + i - j;
  return band_[static_cast<size_t>(j) * (2 * kl_ + ku_ + 1) + r];
}

double BandedMatrix::get(int i, int j) const {
  if (!in_band(i, j)) return 0.0;
  const int r = kl_ + ku_ + i - j;
  return band_[static_cast<size_t>(j) * (2 * kl_ + ku_ + 1) + r];
}

std::vector<double> BandedMatrix::apply(std::span<const double> x) const {
  std::vector<double> y(n_, 0.0);
  for (int j = 0; j < n_; ++j) {
    const int ilo = std::max(0, j - ku_);
    const int ihi = std::min(n_ - 1, j + kl_);
    for (int i = ilo; i <= ihi; ++i) y[i] += get(i, j) * x[j];
  }
  return y;
}

BandedLu::BandedLu(BandedMatrix a) : lu_(std::move(a)), piv_(lu_.size()) {
  const int n = lu_.size();
  const int kl = lu_.kl_, ku = lu_.ku_;
  const int kv = kl + ku;  // effective superdiagonals after pivot fill
  double scale = 0.0;
  for (int j = 0; j < n; ++j)
    for (int i = std::max(0, j - ku); i <= std::min(n - 1, j + kl); ++i)
      scale = std::max(scale, std::abs(lu_.get(i, j)));
  if (scale == 0.0) throw NumericError("BandedLu: zero matrix");
  auto entry = [&](int i, int j) -> double& {
    return lu_.band_[static_cast<size_t>(j) * (2 * kl + ku + 1) + (kl + ku + i - j)];
  };
  for (int k = 0; k < n; ++k) {
    const int ihi = std::min(n - 1, k + kl);
    int p = k;
    double best = std::abs(entry(k, k));
    for (int i = k + 1; i <= ihi; ++i) {
      const double v = std::abs(entry(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best < 1e-14 * scale) throw NumericError("BandedLu: singular matrix (pivot below threshold)");
    piv_[k] = p;
    const int jhi = std::min(n - 1, k + kv);
    if (p != k)
      for (int j = k; j <= jhi; ++j) std::swap(entry(k, j), entry(p, j));
    const double inv = 1.0 / entry(k, k);
    for (int i = k + 1; i <= ihi; ++i) {
      const double m = entry(i, k) * inv;
      entry(i, k) = m;
      if (m != 0.0)
        for (int j = k + 1; j <= jhi; ++j) entry(i, j) -= m * entry(k, j);
    }
  }
}

void BandedLu::solve_in_place(std::span<double> b) const {
  const int n = lu_.size();
  const int kl = lu_.kl_, ku = lu_.ku_;
  const int kv = kl + ku;
  auto entry = [&](int i, int j) -> double {
    return lu_.band_[static_cast<size_t>(j) * (2 * kl + ku + 1) + (kl + ku + i - j)];
  };
  for (int k = 0; k < n; ++k) {
    if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
    const int ihi = std::min(n - 1, k + kl);
    for (int i = k + 1; i <= ihi; ++i) b[i] -= entry(i, k) * b[k];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    const int jhi = std::min(n - 1, i + kv);
    for (int j = i + 1; j <= jhi; ++j) s -= entry(i, j) * b[j];
    b[i] = s / entry(i, i);
  }
}

std::vector<double> BandedLu::solve(std::span<const double> b) const {
  std::vector<double> x(b.begin(), b.end());
  solve_in_place(x);
  return x;
}

std::vector<double> lu_solve(const BandedMatrix& a, std::span<const double> b) {
  return BandedLu(a).solve(b);
}

void SparseMatrix::finalize() {
  std::sort(trip_.begin(), trip_.end(), [](const Triplet& a, const Triplet& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  row_ptr_.assign(rows_ + 1, 0);
  col_idx_.clear();
  val_.clear();
  for (size_t k = 0; k < trip_.size();) {
    size_t e = k;
    double s = 0.0;
    while (e < trip_.size() && trip_[e].i == trip_[k].i && trip_[e].j == trip_[k].j) s += trip_[e++].v;
    col_idx_.push_back(trip_[k].j);
    val_.push_back(s);
    ++row_ptr_[trip_[k].i + 1];
    k = e;
  }
  for (int i = 0; i < rows_; ++i) row_ptr_[i + 1] += row_ptr_[i];
  trip_.clear();
  trip_.shrink_to_fit();
  finalized_ = true;
}

std::vector<double> SparseMatrix::apply(std::span<const double> x) const {
  std::vector<double> y(rows_, 0.0);
  for (int i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += val_[k] * x[col_idx_[k]];
    y[i] = s;
  }
  return y;
}

std::vector<double> SparseMatrix::apply_transpose(std::span<const double> x) const {
  std::vector<double> y(cols_, 0.0);
  for (int i = 0; i < rows_; ++i)
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) y[col_idx_[k]] += val_[k] * x[i];
  return y;
}

std::vector<double> SparseMatrix::diagonal() const {
  std::vector<double> d(std::min(rows_, cols_), 0.0);
  for (int i = 0; i < rows_; ++i)
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
      if (col_idx_[k] == i) d[i] += val_[k];
  return d;
}

void IntSparse::add(int i, int j, long long v) {
  if (v != 0) trip_.push_back({i, j, v});
}

void IntSparse::finalize() {
  std::sort(trip_.begin(), trip_.end(), [](const Triplet& a, const Triplet& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  row_ptr_.assign(rows_ + 1, 0);
  col_idx_.clear();
  val_.clear();
  for (size_t k = 0; k < trip_.size();) {
    size_t e = k;
    long long s = 0;
    while (e < trip_.size() && trip_[e].i == trip_[k].i && trip_[e].j == trip_[k].j) s += trip_[e++].v;
    if (s != 0) {
      col_idx_.push_back(trip_[k].j);
      val_.push_back(s);
      ++row_ptr_[trip_[k].i + 1];
    }
    k = e;
  }
  for (int i = 0; i < rows_; ++i) row_ptr_[i + 1] += row_ptr_[i];
  trip_.clear();
  trip_.shrink_to_fit();
  finalized_ = true;
}

std::vector<double> IntSparse::apply(std::span<const double> x) const {
  std::vector<double> y(rows_, 0.0);
  for (int i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += static_cast<double>(val_[k]) * x[col_idx_[k]];
    y[i] = s;
  }
  return y;
}

std::vector<double> IntSparse::apply_transpose(std::span<const double> x) const {
  std::vector<double> y(cols_, 0.0);
  for (int i = 0; i < rows_; ++i)
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
      y[col_idx_[k]] += static_cast<double>(val_[k]) * x[i];
  return y;
}

IntSparse IntSparse::multiply(const IntSparse& other) const {
  IntSparse out(rows_, other.cols());
  for (int i = 0; i < rows_; ++i)
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      const int mid = col_idx_[k];
      const long long v = val_[k];
      for (int k2 = other.row_ptr_[mid]; k2 < other.row_ptr_[mid + 1]; ++k2)
        out.add(i, other.col_idx_[k2], v * other.val_[k2]);
    }
  out.finalize();
  return out;
}

bool IntSparse::is_zero() const { return val_.empty(); }

long long IntSparse::max_abs_entry() const {
  long long m = 0;
  for (long long v : val_) m = std::max(m, std::abs(v));
  return m;
}

CgResult cg_solve(const SparseMatrix& a, std::span<const double> b, double tol, int max_iter) {
  const int n = a.rows();
  std::vector<double> inv_diag = a.diagonal();
  for (double& d : inv_diag) {
    if (d <= 0.0) throw NumericError("cg_solve: non-positive diagonal, matrix not SPD");
    d = 1.0 / d;
  }
  CgResult res;
  res.x.assign(n, 0.0);
  std::vector<double> r(b.begin(), b.end());
  const double bnorm = norm2(r);
  if (bnorm == 0.0) return res;
  std::vector<double> z(n), p(n);
  for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= max_iter; ++it) {
    std::vector<double> ap = a.apply(p);
    const double pap = dot(p, ap);
    if (pap <= 0.0) throw NumericError("cg_solve: matrix not positive definite");
    const double alpha = rz / pap;
    for (int i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    res.iterations = it;
    res.relative_residual = norm2(r) / bnorm;
    if (res.relative_residual <= tol) return res;
    for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw NumericError("cg_solve: no convergence after " + std::to_string(max_iter) +
                     " iterations, relative residual " + std::to_string(res.relative_residual));
}

namespace {

using cplx = std::complex<long double>;

// Characteristic polynomial coefficients of a 4x4 via Faddeev-LeVerrier:
// p(l) = l^4 + c3 l^3 + c2 l^2 + c1 l + c0.
std::array<cplx, 4> char_poly(const std::array<cplx, 16>& a) {
  auto mul = [](const std::array<cplx, 16>& x, const std::array<cplx, 16>& y) {
    std::array<cplx, 16> z{};
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k) {
        const cplx v = x[4 * i + k];
        for (int j = 0; j < 4; ++j) z[4 * i + j] += v * y[4 * k + j];
      }
    return z;
  };
  auto trace = [](const std::array<cplx, 16>& x) { return x[0] + x[5] + x[10] + x[15]; };

  std::array<cplx, 16> m = a;
  cplx c3 = -trace(m);
  for (int i = 0; i < 4; ++i) m[4 * i + i] += c3;
  m = mul(a, m);
  cplx c2 = -trace(m) / 2.0L;
  for (int i = 0; i < 4; ++i) m[4 * i + i] += c2;
  m = mul(a, m);
  cplx c1 = -trace(m) / 3.0L;
  for (int i = 0; i < 4; ++i) m[4 * i + i] += c1;
  m = mul(a, m);
  cplx c0 = -trace(m) / 4.0L;
  return {c3, c2, c1, c0};
}

cplx poly_eval(const std::array<cplx, 4>& c, cplx z) {
  return (((z + c[0]) * z + c[1]) * z + c[2]) * z + c[3];
}

cplx poly_deriv(const std::array<cplx, 4>& c, cplx z) {
  return ((4.0L * z + 3.0L * c[0]) * z + 2.0L * c[1]) * z + c[2];
}

}  // namespace

std::complex<double> det4_shifted(const std::array<std::complex<double>, 16>& a, std::complex<double> lambda) {
  std::array<std::complex<double>, 16> m = a;
  for (int i = 0; i < 4; ++i) m[4 * i + i] -= lambda;
  // direct 4x4 determinant by expansion along the first row
  auto det3 = [&](int r0, int r1, int r2, int c0, int c1, int c2) {
    return m[4 * r0 + c0] * (m[4 * r1 + c1] * m[4 * r2 + c2] - m[4 * r1 + c2] * m[4 * r2 + c1]) -
           m[4 * r0 + c1] * (m[4 * r1 + c0] * m[4 * r2 + c2] - m[4 * r1 + c2] * m[4 * r2 + c0]) +
           m[4 * r0 + c2] * (m[4 * r1 + c0] * m[4 * r2 + c1] - m[4 * r1 + c1] * m[4 * r2 + c0]);
  };
  return m[0] * det3(1, 2, 3, 1, 2, 3) - m[1] * det3(1, 2, 3, 0, 2, 3) +
         m[2] * det3(1, 2, 3, 0, 1, 3) - m[3] * det3(1, 2, 3, 0, 1, 2);
}

std::array<std::complex<double>, 4> eig4(const std::array<std::complex<double>, 16>& a) {
  std::array<cplx, 16> al;
  long double scale = 0.0L;
  for (int i = 0; i < 16; ++i) {
    al[i] = cplx(a[i].real(), a[i].imag());
    scale = std::max(scale, std::abs(al[i]));
  }
  if (!(scale < 1e300L)) throw NumericError("eig4: non-finite entries");
  if (scale == 0.0L) return {0.0, 0.0, 0.0, 0.0};

  const std::array<cplx, 4> c = char_poly(al);

  // Durand-Kerner from a non-symmetric starting configuration, then Newton
  // polish on the characteristic quartic in extended precision.
  std::array<cplx, 4> r;
  const cplx seed(0.4L, 0.9L);
  cplx s = seed * scale;
  for (int i = 0; i < 4; ++i) {
    r[i] = s;
    s *= seed;
  }
  for (int it = 0; it < 200; ++it) {
    long double step = 0.0L;
    for (int i = 0; i < 4; ++i) {
      cplx den = 1.0L;
      for (int j = 0; j < 4; ++j)
        if (j != i) den *= (r[i] - r[j]);
      if (den == cplx(0.0L, 0.0L)) {
        r[i] += cplx(1e-12L, 1e-12L) * scale;
        continue;
      }
      const cplx d = poly_eval(c, r[i]) / den;
      r[i] -= d;
      step = std::max(step, std::abs(d));
    }
    if (step < 1e-22L * scale) break;
  }
  for (int i = 0; i < 4; ++i) {
    for (int it = 0; it < 60; ++it) {
      const cplx f = poly_eval(c, r[i]);
      const cplx df = poly_deriv(c, r[i]);
      if (std::abs(df) == 0.0L) break;
      const cplx d = f / df;
      r[i] -= d;
      if (std::abs(d) < 1e-24L * std::max(std::abs(r[i]), scale)) break;
    }
  }

  // Multiple roots smear the iterates over a radius ~eps^(1/m); snap a
  // cluster to its centroid only when the centroid verifiably annihilates
  // the leading Taylor coefficients (true multiplicity), so genuinely close
  // but distinct eigenvalues are never merged.
  for (const long double tau_rel : {3e-2L, 3e-3L, 3e-4L}) {
    const long double tau = tau_rel * scale;
    std::array<int, 4> comp = {0, 1, 2, 3};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < i; ++j)
        if (std::abs(r[i] - r[j]) < tau) {
          const int a = comp[i], b = comp[j];
          for (int k = 0; k < 4; ++k)
            if (comp[k] == a) comp[k] = b;
        }
    for (int cl = 0; cl < 4; ++cl) {
      cplx centroid = 0.0L;
      int m = 0;
      for (int k = 0; k < 4; ++k)
        if (comp[k] == cl) {
          centroid += r[k];
          ++m;
        }
      if (m < 2) continue;
      centroid /= static_cast<long double>(m);
      const std::array<cplx, 5> p = {1.0L, c[0], c[1], c[2], c[3]};
      // an m-fold root is a simple root of the (m-1)-th derivative: refine
      // the centroid by Newton there before validating
      auto deriv_eval = [&](int j, cplx z, cplx& val, cplx& dval) {
        val = 0.0L;
        dval = 0.0L;
        for (int k = 0; k + j <= 4; ++k) {
          long double fall = 1.0L;
          for (int t = 0; t < j; ++t) fall *= static_cast<long double>(4 - k - t);
          dval = dval * z + val;
          val = val * z + p[k] * fall;
        }
      };
      for (int it = 0; it < 20; ++it) {
        cplx g, dg;
        deriv_eval(m - 1, centroid, g, dg);
        if (std::abs(dg) == 0.0L) break;
        const cplx step = g / dg;
        centroid -= step;
        if (std::abs(step) < 1e-24L * std::max(std::abs(centroid), scale)) break;
      }
      bool multiple = true;
      for (int j = 0; j < m && multiple; ++j) {
        cplx val = 0.0L;
        long double mag = 0.0L;
        for (int k = 0; k + j <= 4; ++k) {
          long double fall = 1.0L;
          for (int t = 0; t < j; ++t) fall *= static_cast<long double>(4 - k - t);
          const cplx coeff = p[k] * fall;
          val = val * centroid + coeff;
          mag = mag * std::abs(centroid) + std::abs(coeff);
        }
        if (std::abs(val) > 64.0L * 1.1e-19L * std::max(mag, 1e-300L)) multiple = false;
      }
      if (multiple)
        for (int k = 0; k < 4; ++k)
          if (comp[k] == cl) r[k] = centroid;
    }
  }

  std::array<std::complex<double>, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = {static_cast<double>(r[i].real()), static_cast<double>(r[i].imag())};
  std::sort(out.begin(), out.end(), [](std::complex<double> x, std::complex<double> y) {
    const double ax = std::arg(x), ay = std::arg(y);
    if (ax != ay) return ax < ay;
    return std::abs(x) < std::abs(y);
  });
  return out;
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

}  // namespace hevi::numkit
