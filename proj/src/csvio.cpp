#include "hevi/csvio.hpp"

#include <cstdio>
#include <fstream>

#include "hevi/errors.hpp"

namespace hevi {

std::string format_double(double v) {
  char buf[36];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_timeseries(const std::string& path, std::span<const std::string> columns,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size()) throw IoError("row width mismatch writing " + path);
    for (size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
    out << "\n";
  }
  if (!out) throw IoError("write failure: " + path);
}

void write_field_csv(const std::string& path, const MeshComplex& mesh, const std::string& name,
                     double time, std::span<const double> values_at_quad) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "# field=" << name << " t=" << format_double(time) << "\n";
  out << "x,z," << name << "\n";
  for (int q = 0; q < mesh.quad_count(); ++q)
    out << format_double(mesh.quad_x(q)) << "," << format_double(mesh.quad_z(q)) << ","
        << format_double(values_at_quad[q]) << "\n";
  if (!out) throw IoError("write failure: " + path);
}

}  // namespace hevi
