#pragma once

#include <string>

#include "hevi/stability.hpp"
#include "hevi/stepper.hpp"

// Plain key=value run configuration ('#' comments, unknown keys rejected with
// their line number). Defaults are documented next to each field; dt defaults
// to 0.5 s for the stability experiment and 0.05 s otherwise.

namespace hevi {

enum class Experiment { Stability, Column, Bubble, Checks };

struct RunConfig {
  Experiment experiment = Experiment::Bubble;

  // grid
  int nx = 12, nz = 18, p = 3;
  double Lx = 1000.0, Lz = 1500.0;

  // time
  double dt = 0.05;
  double t_end = 200.0;

  PhysConstants constants;

  // scheme switches
  bool upwind = false;
  double upwind_fraction = 0.5;
  double visc = 0.0;  // biharmonic coefficient, m^4/s
  double picard_tol = 1e-12;
  int picard_max_iter = 100;
  bool step1_euler = true;

  // output
  std::string out_dir = "out";
  double snapshot_interval = 0.0;  // seconds; 0 disables snapshots

  // bubble initial condition
  double theta0 = 300.0;
  double dtheta = 0.5;
  double r_c = 250.0;
  double x_c = 500.0;
  double z_c = 350.0;

  // column experiment
  double column_perturb = 1e-3;

  // stability sweep
  Scheme stab_scheme = Scheme::HeviNew;
  double stab_c = 340.0;
  double stab_N = 0.01;
  double stab_L = 1000.0;
  int nk = 64, nl = 64;

  bool operator==(const RunConfig&) const = default;

  std::string serialize() const;
  RunParams to_run_params() const;
  void validate() const;
};

RunConfig parse_config(const std::string& text, Experiment experiment);
RunConfig load_config(const std::string& path, Experiment experiment);

}  // namespace hevi
