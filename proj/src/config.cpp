#include "hevi/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hevi/csvio.hpp"

namespace hevi {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& v, int line) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    if (!std::isfinite(x)) throw std::invalid_argument("not finite");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(line) + ": malformed number '" + v + "'");
  }
}

int parse_int(const std::string& v, int line) {
  const double x = parse_number(v, line);
  const int i = static_cast<int>(std::llround(x));
  if (x != static_cast<double>(i))
    throw ConfigError("config line " + std::to_string(line) + ": expected integer, got '" + v + "'");
  return i;
}

bool parse_bool(const std::string& v, int line) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("config line " + std::to_string(line) + ": malformed boolean '" + v + "'");
}

Scheme parse_scheme(const std::string& v, int line) {
  if (v == "cn") return Scheme::CrankNicolson;
  if (v == "new") return Scheme::HeviNew;
  if (v == "trap") return Scheme::HeviTrapezoidal;
  throw ConfigError("config line " + std::to_string(line) + ": unknown scheme '" + v +
                    "' (expected cn|new|trap)");
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::CrankNicolson:
      return "cn";
    case Scheme::HeviNew:
      return "new";
    case Scheme::HeviTrapezoidal:
      return "trap";
  }
  return "new";
}

}  // namespace

RunConfig parse_config(const std::string& text, Experiment experiment) {
  RunConfig cfg;
  cfg.experiment = experiment;
  if (experiment == Experiment::Stability) cfg.dt = 0.5;

  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    const auto hash = s.find('#');
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line) + ": expected key=value");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("config line " + std::to_string(line) + ": expected key=value");

    if (key == "nx")
      cfg.nx = parse_int(val, line);
    else if (key == "nz")
      cfg.nz = parse_int(val, line);
    else if (key == "p")
      cfg.p = parse_int(val, line);
    else if (key == "Lx")
      cfg.Lx = parse_number(val, line);
    else if (key == "Lz")
      cfg.Lz = parse_number(val, line);
    else if (key == "dt")
      cfg.dt = parse_number(val, line);
    else if (key == "t_end")
      cfg.t_end = parse_number(val, line);
    else if (key == "cp")
      cfg.constants.cp = parse_number(val, line);
    else if (key == "cv")
      cfg.constants.cv = parse_number(val, line);
    else if (key == "R")
      cfg.constants.R = parse_number(val, line);
    else if (key == "p0")
      cfg.constants.p0 = parse_number(val, line);
    else if (key == "g")
      cfg.constants.g = parse_number(val, line);
    else if (key == "upwind")
      cfg.upwind = parse_bool(val, line);
    else if (key == "upwind_fraction")
      cfg.upwind_fraction = parse_number(val, line);
    else if (key == "visc")
      cfg.visc = parse_number(val, line);
    else if (key == "picard_tol")
      cfg.picard_tol = parse_number(val, line);
    else if (key == "picard_max_iter")
      cfg.picard_max_iter = parse_int(val, line);
    else if (key == "step1_euler")
      cfg.step1_euler = parse_bool(val, line);
    else if (key == "out_dir")
      cfg.out_dir = val;
    else if (key == "snapshot_interval")
      cfg.snapshot_interval = parse_number(val, line);
    else if (key == "theta0")
      cfg.theta0 = parse_number(val, line);
    else if (key == "dtheta")
      cfg.dtheta = parse_number(val, line);
    else if (key == "r_c")
      cfg.r_c = parse_number(val, line);
    else if (key == "x_c")
      cfg.x_c = parse_number(val, line);
    else if (key == "z_c")
      cfg.z_c = parse_number(val, line);
    else if (key == "column_perturb")
      cfg.column_perturb = parse_number(val, line);
    else if (key == "scheme")
      cfg.stab_scheme = parse_scheme(val, line);
    else if (key == "c")
      cfg.stab_c = parse_number(val, line);
    else if (key == "N")
      cfg.stab_N = parse_number(val, line);
    else if (key == "L")
      cfg.stab_L = parse_number(val, line);
    else if (key == "nk")
      cfg.nk = parse_int(val, line);
    else if (key == "nl")
      cfg.nl = parse_int(val, line);
    else
      throw ConfigError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path, Experiment experiment) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), experiment);
}

void RunConfig::validate() const {
  if (nx < 1 || nz < 1 || p < 1) throw ConfigError("config: nx, nz, p must be >= 1");
  if (!(Lx > 0.0) || !(Lz > 0.0)) throw ConfigError("config: Lx, Lz must be positive");
  if (!(dt > 0.0)) throw ConfigError("config: dt must be positive");
  if (!(t_end > 0.0)) throw ConfigError("config: t_end must be positive");
  constants.validate();
  if (!(upwind_fraction >= 0.0)) throw ConfigError("config: upwind_fraction must be >= 0");
  if (visc < 0.0) throw ConfigError("config: visc must be >= 0");
  if (!(picard_tol > 0.0)) throw ConfigError("config: picard_tol must be positive");
  if (picard_max_iter < 1) throw ConfigError("config: picard_max_iter must be >= 1");
  if (snapshot_interval < 0.0) throw ConfigError("config: snapshot_interval must be >= 0");
  if (!(theta0 > 0.0)) throw ConfigError("config: theta0 must be positive");
  if (!(r_c > 0.0)) throw ConfigError("config: r_c must be positive");
  if (!(stab_c > 0.0) || stab_N < 0.0 || !(stab_L > 0.0))
    throw ConfigError("config: stability parameters out of range");
  if (nk < 1 || nl < 1) throw ConfigError("config: nk, nl must be >= 1");
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  auto num = [&](const char* key, double v) { out << key << "=" << format_double(v) << "\n"; };
  out << "nx=" << nx << "\nnz=" << nz << "\np=" << p << "\n";
  num("Lx", Lx);
  num("Lz", Lz);
  num("dt", dt);
  num("t_end", t_end);
  num("cp", constants.cp);
  num("cv", constants.cv);
  num("R", constants.R);
  num("p0", constants.p0);
  num("g", constants.g);
  out << "upwind=" << (upwind ? 1 : 0) << "\n";
  num("upwind_fraction", upwind_fraction);
  num("visc", visc);
  num("picard_tol", picard_tol);
  out << "picard_max_iter=" << picard_max_iter << "\n";
  out << "step1_euler=" << (step1_euler ? 1 : 0) << "\n";
  out << "out_dir=" << out_dir << "\n";
  num("snapshot_interval", snapshot_interval);
  num("theta0", theta0);
  num("dtheta", dtheta);
  num("r_c", r_c);
  num("x_c", x_c);
  num("z_c", z_c);
  num("column_perturb", column_perturb);
  out << "scheme=" << scheme_name(stab_scheme) << "\n";
  num("c", stab_c);
  num("N", stab_N);
  num("L", stab_L);
  out << "nk=" << nk << "\nnl=" << nl << "\n";
  return out.str();
}

RunParams RunConfig::to_run_params() const {
  RunParams rp;
  rp.nx = nx;
  rp.nz = nz;
  rp.p = p;
  rp.Lx = Lx;
  rp.Lz = Lz;
  rp.dt = dt;
  rp.t_end = t_end;
  rp.constants = constants;
  rp.scheme.upwind = upwind;
  rp.scheme.upwind_fraction = upwind_fraction;
  rp.scheme.viscosity = visc;
  rp.scheme.picard_tol = picard_tol;
  rp.scheme.picard_max_iter = picard_max_iter;
  rp.scheme.step1_euler = step1_euler;
  rp.bubble.theta0 = theta0;
  rp.bubble.dtheta = dtheta;
  rp.bubble.radius = r_c;
  rp.bubble.x_c = x_c;
  rp.bubble.z_c = z_c;
  rp.theta0 = theta0;
  rp.column_mode = experiment == Experiment::Column;
  rp.column_perturb = column_perturb;
  rp.snapshot_every = snapshot_interval > 0.0 ? std::max(1, static_cast<int>(std::llround(snapshot_interval / dt)))
                                              : 0;
  rp.out_dir = out_dir;
  return rp;
}

}  // namespace hevi
