#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hevi/checks.hpp"
#include "hevi/config.hpp"
#include "hevi/csvio.hpp"

namespace {

hevi::RunConfig make_config(const std::string& config_path, hevi::Experiment exp) {
  if (config_path.empty()) {
    hevi::RunConfig cfg = hevi::parse_config("", exp);
    return cfg;
  }
  return hevi::load_config(config_path, exp);
}

int run_experiment(const hevi::RunConfig& cfg) {
  const hevi::RunResult res = hevi::run_simulation(cfg.to_run_params());
  const hevi::StepDiagnostics& last = res.series.back();
  std::printf("completed t=%g  H=%.*g  dH=%.3e  max theta=%.6f  steps=%zu\n", last.t, 12, last.total,
              last.dH, last.theta_max, res.series.size());
  std::printf("outputs in %s\n", cfg.out_dir.c_str());
  return 0;
}

int run_stability(const hevi::RunConfig& cfg, const std::string& out_csv) {
  const hevi::SweepGrid grid = hevi::sweep_grid(cfg.stab_scheme, cfg.stab_c, cfg.stab_N, cfg.dt,
                                                cfg.stab_L, cfg.stab_L, cfg.nk, cfg.nl);
  hevi::write_sweep_csv(out_csv, grid);
  double worst = 0.0;
  for (const auto& pt : grid.points) worst = std::max(worst, pt.amp.max_modulus());
  std::printf("sweep written to %s  (max |lambda| = %.15g)\n", out_csv.c_str(), worst);

  const hevi::AcousticBoundary ab = hevi::acoustic_stability_boundary(
      cfg.stab_scheme, cfg.stab_c, cfg.stab_N, cfg.dt, cfg.stab_L, cfg.stab_L, cfg.nk, cfg.nl);
  if (ab.stable_throughout)
    std::printf("acoustic modes: stable throughout the sampled lattice\n");
  else
    std::printf("acoustic onset: k* = %.9g rad/m (lattice index %d), CFL k*c*dt/pi = %.6g\n",
                ab.k_star, ab.m_star, ab.cfl);
  return 0;
}

int run_checks_cmd(std::optional<double> tol) {
  const auto results = hevi::run_checks(tol);
  bool all = true;
  std::printf("%-52s %-6s %-13s %s\n", "check", "status", "measured", "tolerance");
  for (const auto& r : results) {
    all = all && r.passed;
    std::printf("%-52s %-6s %-13.3e %.3e\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.measured,
                r.tolerance);
  }
  return all ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structure-preserving HEVI solver for the compressible Euler slice"};
  app.require_subcommand(1);

  std::string config_path, out_override;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--out", out_override, "output directory (CSV file for `stability`)");
  };

  CLI::App* stab = app.add_subcommand("stability", "linearised Boussinesq amplification sweep");
  add_common(stab);
  std::string scheme_flag;
  double c_flag = -1.0, n_flag = -1.0, dt_flag = -1.0, l_flag = -1.0;
  int nk_flag = -1, nl_flag = -1;
  stab->add_option("--scheme", scheme_flag, "cn|new|trap");
  stab->add_option("--c", c_flag, "sound speed, m/s");
  stab->add_option("--N", n_flag, "Brunt-Vaisala frequency, 1/s");
  stab->add_option("--dt", dt_flag, "time step, s");
  stab->add_option("--L", l_flag, "domain size, m");
  stab->add_option("--nk", nk_flag, "horizontal wavenumbers");
  stab->add_option("--nl", nl_flag, "vertical wavenumbers");

  CLI::App* column = app.add_subcommand("column", "1D column implicit-substep experiment");
  add_common(column);
  CLI::App* bubble = app.add_subcommand("bubble", "rising thermal bubble slice experiment");
  add_common(bubble);

  CLI::App* checks = app.add_subcommand("checks", "run the structural invariant suite");
  double tol_flag = -1.0;
  checks->add_option("--tol", tol_flag, "override all residual tolerances");

  try {
    app.parse(argc, argv);

    if (checks->parsed()) {
      return run_checks_cmd(tol_flag > 0.0 ? std::optional<double>(tol_flag) : std::nullopt);
    }
    if (stab->parsed()) {
      hevi::RunConfig cfg = make_config(config_path, hevi::Experiment::Stability);
      if (!scheme_flag.empty()) {
        if (scheme_flag == "cn")
          cfg.stab_scheme = hevi::Scheme::CrankNicolson;
        else if (scheme_flag == "new")
          cfg.stab_scheme = hevi::Scheme::HeviNew;
        else if (scheme_flag == "trap")
          cfg.stab_scheme = hevi::Scheme::HeviTrapezoidal;
        else
          throw hevi::ConfigError("unknown --scheme '" + scheme_flag + "' (expected cn|new|trap)");
      }
      if (c_flag > 0.0) cfg.stab_c = c_flag;
      if (n_flag >= 0.0) cfg.stab_N = n_flag;
      if (dt_flag > 0.0) cfg.dt = dt_flag;
      if (l_flag > 0.0) cfg.stab_L = l_flag;
      if (nk_flag > 0) cfg.nk = nk_flag;
      if (nl_flag > 0) cfg.nl = nl_flag;
      cfg.validate();
      return run_stability(cfg, out_override.empty() ? "grid.csv" : out_override);
    }
    hevi::RunConfig cfg = make_config(config_path, column->parsed() ? hevi::Experiment::Column
                                                                    : hevi::Experiment::Bubble);
    if (!out_override.empty()) cfg.out_dir = out_override;
    return run_experiment(cfg);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const hevi::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const hevi::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 2;
  } catch (const hevi::DomainError& e) {
    std::fprintf(stderr, "state error: %s\n", e.what());
    return 2;
  } catch (const hevi::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 2;
  }
}
