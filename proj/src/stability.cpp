#include "hevi/stability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hevi/csvio.hpp"
#include "hevi/errors.hpp"

namespace hevi {

namespace {

using cd = std::complex<double>;

Mat4 identity4() {
  Mat4 m{};
  m[0] = m[5] = m[10] = m[15] = 1.0;
  return m;
}

Mat4 mat_mul(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      const cd v = a[4 * i + k];
      if (v == cd(0.0, 0.0)) continue;
      for (int j = 0; j < 4; ++j) c[4 * i + j] += v * b[4 * k + j];
    }
  return c;
}

Mat4 mat_add(const Mat4& a, const Mat4& b) {
  Mat4 c;
  for (int i = 0; i < 16; ++i) c[i] = a[i] + b[i];
  return c;
}

// X = L^{-1} R by Gaussian elimination with partial pivoting.
Mat4 mat_solve(Mat4 l, Mat4 r) {
  for (int k = 0; k < 4; ++k) {
    int p = k;
    for (int i = k + 1; i < 4; ++i)
      if (std::abs(l[4 * i + k]) > std::abs(l[4 * p + k])) p = i;
    if (std::abs(l[4 * p + k]) == 0.0)
      throw NumericError("amplification_matrix: singular left operator");
    if (p != k)
      for (int j = 0; j < 4; ++j) {
        std::swap(l[4 * k + j], l[4 * p + j]);
        std::swap(r[4 * k + j], r[4 * p + j]);
      }
    const cd inv = 1.0 / l[4 * k + k];
    for (int j = 0; j < 4; ++j) {
      l[4 * k + j] *= inv;
      r[4 * k + j] *= inv;
    }
    for (int i = 0; i < 4; ++i) {
      if (i == k) continue;
      const cd m = l[4 * i + k];
      if (m == cd(0.0, 0.0)) continue;
      for (int j = 0; j < 4; ++j) {
        l[4 * i + j] -= m * l[4 * k + j];
        r[4 * i + j] -= m * r[4 * k + j];
      }
    }
  }
  return r;
}

}  // namespace

void BoussinesqParams::validate() const {
  if (!(c > 0.0)) throw ConfigError("BoussinesqParams: c must be positive");
  if (!(N >= 0.0)) throw ConfigError("BoussinesqParams: N must be non-negative");
  if (!(dt > 0.0)) throw ConfigError("BoussinesqParams: dt must be positive");
}

Mat4 amplification_matrix(Scheme scheme, const BoussinesqParams& p) {
  p.validate();
  if (p.k == 0.0 && p.l == 0.0) return identity4();

  const cd I(0.0, 1.0);
  const double dt = p.dt, c2 = p.c * p.c, N2 = p.N * p.N;
  const cd ik = I * p.k, il = I * p.l;

  switch (scheme) {
    case Scheme::CrankNicolson: {
      const Mat4 l = {1.0, 0.0, ik * dt / 2.0, 0.0,
                      0.0, 1.0, il * dt / 2.0, -dt / 2.0,
                      ik * c2 * dt / 2.0, il * c2 * dt / 2.0, 1.0, 0.0,
                      0.0, N2 * dt / 2.0, 0.0, 1.0};
      const Mat4 r = {1.0, 0.0, -ik * dt / 2.0, 0.0,
                      0.0, 1.0, -il * dt / 2.0, dt / 2.0,
                      -ik * c2 * dt / 2.0, -il * c2 * dt / 2.0, 1.0, 0.0,
                      0.0, -N2 * dt / 2.0, 0.0, 1.0};
      return mat_solve(l, r);
    }
    case Scheme::HeviNew: {
      // provisional u' = u^n - dt ik p^n already substituted into the p row
      const Mat4 l = {1.0, 0.0, ik * dt / 2.0, 0.0,
                      0.0, 1.0, il * dt / 2.0, -dt / 2.0,
                      0.0, il * c2 * dt / 2.0, 1.0, 0.0,
                      0.0, N2 * dt / 2.0, 0.0, 1.0};
      const Mat4 r = {1.0, 0.0, -ik * dt / 2.0, 0.0,
                      0.0, 1.0, -il * dt / 2.0, dt / 2.0,
                      -ik * c2 * dt, -il * c2 * dt / 2.0, 1.0 - dt * dt * p.k * p.k * c2 / 2.0, 0.0,
                      0.0, -N2 * dt / 2.0, 0.0, 1.0};
      return mat_solve(l, r);
    }
    case Scheme::HeviTrapezoidal: {
      // stage 1: vertically implicit predictor with a full explicit
      // horizontal step; the +N^2 dt/2 right-hand entry follows the
      // displayed operator.
      const Mat4 l1 = {1.0, 0.0, 0.0, 0.0,
                       0.0, 1.0, il * dt / 2.0, -dt / 2.0,
                       0.0, il * c2 * dt / 2.0, 1.0, 0.0,
                       0.0, N2 * dt / 2.0, 0.0, 1.0};
      const Mat4 r1 = {1.0, 0.0, -ik * dt, 0.0,
                       0.0, 1.0, -il * dt / 2.0, dt / 2.0,
                       -ik * c2 * dt, -il * c2 * dt / 2.0, 1.0, 0.0,
                       0.0, N2 * dt / 2.0, 0.0, 1.0};
      const Mat4 s1 = mat_solve(l1, r1);
      // stage 2: explicit trapezoidal corrector mixing y^n and the predictor
      const Mat4 a2a = {1.0, 0.0, -ik * dt / 2.0, 0.0,
                        0.0, 1.0, -il * dt / 2.0, dt / 2.0,
                        -ik * c2 * dt / 2.0, -il * c2 * dt / 2.0, 1.0, 0.0,
                        0.0, -N2 * dt / 2.0, 0.0, 1.0};
      const Mat4 a2b = {0.0, 0.0, -ik * dt / 2.0, 0.0,
                        0.0, 0.0, -il * dt / 2.0, dt / 2.0,
                        -ik * c2 * dt / 2.0, -il * c2 * dt / 2.0, 0.0, 0.0,
                        0.0, -N2 * dt / 2.0, 0.0, 0.0};
      return mat_add(a2a, mat_mul(a2b, s1));
    }
  }
  throw ConfigError("amplification_matrix: unknown scheme");
}

double AmplificationResult::max_modulus() const {
  return *std::max_element(moduli.begin(), moduli.end());
}

AmplificationResult amplification_factors(Scheme scheme, const BoussinesqParams& p) {
  const Mat4 a = amplification_matrix(scheme, p);
  AmplificationResult res;
  res.eigenvalues = numkit::eig4(a);

  // eigensolver self-check against the shifted determinant
  double anorm = 0.0;
  for (const cd& v : a) anorm = std::max(anorm, std::abs(v));
  for (const cd& lam : res.eigenvalues) {
    const double resid = std::abs(numkit::det4_shifted(a, lam));
    if (resid > 1e-10 * std::max(1.0, anorm * anorm * anorm * anorm))
      throw NumericError("amplification_factors: eigenvalue residual " + std::to_string(resid));
  }

  std::array<int, 4> order = {0, 1, 2, 3};
  std::array<double, 4> absarg;
  for (int i = 0; i < 4; ++i) {
    res.moduli[i] = std::abs(res.eigenvalues[i]);
    absarg[i] = std::abs(std::arg(res.eigenvalues[i]));
  }
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    if (absarg[x] != absarg[y]) return absarg[x] < absarg[y];
    return res.moduli[x] < res.moduli[y];
  });
  res.gravity_moduli = {res.moduli[order[0]], res.moduli[order[1]]};
  res.acoustic_moduli = {res.moduli[order[2]], res.moduli[order[3]]};
  res.labels_ambiguous = (absarg[order[2]] - absarg[order[1]]) < 1e-8;
  return res;
}

SweepGrid sweep_grid(Scheme scheme, double c, double N, double dt, double Lx, double Lz, int nk,
                     int nl) {
  if (nk < 1 || nl < 1) throw ConfigError("sweep_grid: nk, nl must be >= 1");
  const double two_pi = 2.0 * std::acos(-1.0);
  SweepGrid grid;
  grid.nk = nk;
  grid.nl = nl;
  grid.points.resize(static_cast<size_t>(nk) * nl);
  for (int m = 0; m < nk; ++m)
    for (int n = 0; n < nl; ++n) {
      BoussinesqParams p;
      p.c = c;
      p.N = N;
      p.dt = dt;
      p.k = two_pi * m / Lx;
      p.l = two_pi * n / Lz;
      SweepPoint& pt = grid.points[m * nl + n];
      pt.k = p.k;
      pt.l = p.l;
      pt.amp = amplification_factors(scheme, p);
      if (pt.amp.labels_ambiguous && m > 0) {
        // continuity fallback: inherit the family of the nearest eigenvalue
        // at the previous k; keep the |arg| split if that yields an uneven
        // 2/2 partition
        const AmplificationResult& prev = grid.points[(m - 1) * nl + n].amp;
        std::array<double, 4> prev_absarg;
        for (int j = 0; j < 4; ++j) prev_absarg[j] = std::abs(std::arg(prev.eigenvalues[j]));
        std::array<int, 4> po = {0, 1, 2, 3};
        std::sort(po.begin(), po.end(), [&](int x, int y) { return prev_absarg[x] < prev_absarg[y]; });
        std::array<bool, 4> prev_is_gravity{};
        prev_is_gravity[po[0]] = prev_is_gravity[po[1]] = true;

        std::vector<double> grav, acou;
        for (int i = 0; i < 4; ++i) {
          const cd lam = pt.amp.eigenvalues[i];
          int bestj = 0;
          double best = std::abs(lam - prev.eigenvalues[0]);
          for (int j = 1; j < 4; ++j) {
            const double d = std::abs(lam - prev.eigenvalues[j]);
            if (d < best) {
              best = d;
              bestj = j;
            }
          }
          (prev_is_gravity[bestj] ? grav : acou).push_back(std::abs(lam));
        }
        if (grav.size() == 2 && acou.size() == 2) {
          pt.amp.gravity_moduli = {grav[0], grav[1]};
          pt.amp.acoustic_moduli = {acou[0], acou[1]};
        }
      }
    }
  return grid;
}

void write_sweep_csv(const std::string& path, const SweepGrid& grid) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "k,l,mod_acoustic_1,mod_acoustic_2,mod_gravity_1,mod_gravity_2,"
         "arg_1,arg_2,arg_3,arg_4\n";
  for (const SweepPoint& pt : grid.points) {
    out << format_double(pt.k) << "," << format_double(pt.l);
    out << "," << format_double(pt.amp.acoustic_moduli[0]) << ","
        << format_double(pt.amp.acoustic_moduli[1]);
    out << "," << format_double(pt.amp.gravity_moduli[0]) << ","
        << format_double(pt.amp.gravity_moduli[1]);
    for (int i = 0; i < 4; ++i) out << "," << format_double(std::arg(pt.amp.eigenvalues[i]));
    out << "\n";
  }
  if (!out) throw IoError("write failure: " + path);
}

AcousticBoundary acoustic_stability_boundary(Scheme scheme, double c, double N, double dt, double Lx,
                                             double Lz, int nk, int nl) {
  const double two_pi = 2.0 * std::acos(-1.0);
  const double pi = std::acos(-1.0);
  const double threshold = 1.0 + 1e-12;

  auto unstable_at = [&](int m) {
    for (int n = 0; n < nl; ++n) {
      BoussinesqParams p;
      p.c = c;
      p.N = N;
      p.dt = dt;
      p.k = two_pi * m / Lx;
      p.l = two_pi * n / Lz;
      if (amplification_factors(scheme, p).max_acoustic() > threshold) return true;
    }
    return false;
  };

  AcousticBoundary out;
  if (!unstable_at(nk - 1)) {
    out.stable_throughout = true;
    return out;
  }
  // bisection over the lattice index for the onset (stability is monotone
  // in k for these operators; the acceptance checks verify this directly)
  int lo = 0, hi = nk - 1;  // lo stable (or origin), hi unstable
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (unstable_at(mid))
      hi = mid;
    else
      lo = mid;
  }
  out.m_star = hi;
  out.k_star = two_pi * hi / Lx;
  out.cfl = out.k_star * c * dt / pi;
  return out;
}

}  // namespace hevi
