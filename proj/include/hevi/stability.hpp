#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

#include "hevi/numkit.hpp"

// Linearised compressible-Boussinesq amplification analysis of the three
// time splittings: Crank-Nicolson, the new energetically balanced HEVI and
// the second-order trapezoidal HEVI. State ordering is (u, w, p, b).

namespace hevi {

enum class Scheme { CrankNicolson, HeviNew, HeviTrapezoidal };

struct BoussinesqParams {
  double c = 340.0;  // sound speed, m/s
  double N = 0.01;   // Brunt-Vaisala frequency, 1/s
  double dt = 0.5;   // s
  double k = 0.0;    // horizontal wavenumber, rad/m
  double l = 0.0;    // vertical wavenumber, rad/m

  void validate() const;
};

using Mat4 = std::array<std::complex<double>, 16>;  // row-major

// One-step update operator A = L^{-1} R (for the trapezoidal scheme the
// composition of its two stages). The k = l = 0 point is reported as the
// identity map by convention.
Mat4 amplification_matrix(Scheme scheme, const BoussinesqParams& p);

struct AmplificationResult {
  std::array<std::complex<double>, 4> eigenvalues;
  std::array<double, 4> moduli;
  std::array<double, 2> gravity_moduli;   // two smallest |arg|
  std::array<double, 2> acoustic_moduli;  // two largest |arg|
  bool labels_ambiguous = false;          // |arg| split gap below tolerance

  double max_modulus() const;
  double max_acoustic() const { return std::max(acoustic_moduli[0], acoustic_moduli[1]); }
  double max_gravity() const { return std::max(gravity_moduli[0], gravity_moduli[1]); }
};

AmplificationResult amplification_factors(Scheme scheme, const BoussinesqParams& p);

struct SweepPoint {
  double k = 0.0, l = 0.0;
  AmplificationResult amp;
};

struct SweepGrid {
  int nk = 0, nl = 0;
  std::vector<SweepPoint> points;  // row-major, k outer and l inner

  const SweepPoint& at(int m, int n) const { return points[m * nl + n]; }
};

// Wavenumber lattice k_m = 2 pi m / Lx, l_n = 2 pi n / Lz. Ambiguous |arg|
// splits at large CFL fall back to eigenvalue continuity along k.
SweepGrid sweep_grid(Scheme scheme, double c, double N, double dt, double Lx, double Lz, int nk,
                     int nl);

// CSV columns: k, l, modulus and argument per mode family.
void write_sweep_csv(const std::string& path, const SweepGrid& grid);

struct AcousticBoundary {
  bool stable_throughout = false;
  int m_star = -1;      // lattice index of the first unstable k
  double k_star = 0.0;  // smallest k with an acoustic modulus > 1 + 1e-12
  double cfl = 0.0;     // k_star c dt / pi
};

// Bisects over the sampled k lattice for the onset of acoustic instability
// (modulus > 1 + 1e-12, maximised over the l lattice).
AcousticBoundary acoustic_stability_boundary(Scheme scheme, double c, double N, double dt, double Lx,
                                             double Lz, int nk, int nl);

}  // namespace hevi
