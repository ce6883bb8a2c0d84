#pragma once

#include <span>
#include <string>
#include <vector>

#include "hevi/mesh.hpp"

// Deterministic CSV writers. Floats are printed with 17 significant digits so
// re-reading round-trips exactly and identical configs produce byte-identical
// files.

namespace hevi {

void write_timeseries(const std::string& path, std::span<const std::string> columns,
                      const std::vector<std::vector<double>>& rows);

// One row per model quadrature point: x, z, value. The header names the
// space and the sample time.
void write_field_csv(const std::string& path, const MeshComplex& mesh, const std::string& name,
                     double time, std::span<const double> values_at_quad);

std::string format_double(double v);

}  // namespace hevi
