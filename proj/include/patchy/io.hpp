#pragma once

// CSV and legacy VTK export of value fields and patch maps, CSV import.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchy/errors.hpp"
#include "patchy/grid.hpp"
#include "patchy/metrics.hpp"
#include "patchy/patchy.hpp"

namespace patchy {

enum class ExportFormat { csv, vtk };

inline ExportFormat parse_format(const std::string& s) {
  if (s == "csv") return ExportFormat::csv;
  if (s == "vtk") return ExportFormat::vtk;
  throw ConfigError("unknown export format '" + s + "' (expected csv or vtk)");
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string csv_value(double v) { return is_infinite(v) ? "inf" : format_g9(v); }

template <std::size_t D>
void write_csv_header(std::ofstream& out) {
  for (std::size_t a = 0; a < D; ++a) out << 'x' << a + 1 << ',';
  out << "value\n";
}

template <std::size_t D, class Cell>
void write_csv(const Grid<D>& grid, const std::filesystem::path& path, Cell&& cell) {
  std::ofstream out = open_output(path);
  write_csv_header<D>(out);
  grid.for_each_interior([&](const NodeIndex<D>& i) {
    const Point<D> x = grid.coord(i);
    for (std::size_t a = 0; a < D; ++a) out << format_g9(x[a]) << ',';
    out << cell(grid.flat(i)) << '\n';
  });
  finish(out, path);
}

template <std::size_t D, class Cell>
void write_vtk(const Grid<D>& grid, const std::filesystem::path& path, const std::string& name,
               const std::string& type, Cell&& cell) {
  std::ofstream out = open_output(path);
  out << "# vtk DataFile Version 3.0\n" << name << "\nASCII\nDATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS";
  for (std::size_t a = 0; a < 3; ++a) out << ' ' << (a < D ? grid.nodes(a) : 1);
  out << "\nORIGIN";
  for (std::size_t a = 0; a < 3; ++a) out << ' ' << (a < D ? format_g9(grid.lo()[a]) : "0");
  out << "\nSPACING";
  for (std::size_t a = 0; a < 3; ++a) out << ' ' << (a < D ? format_g9(grid.spacing(a)) : "1");
  out << "\nPOINT_DATA " << grid.interior_count() << "\nSCALARS " << name << ' ' << type
      << " 1\nLOOKUP_TABLE default\n";
  grid.for_each_interior([&](const NodeIndex<D>& i) { out << cell(grid.flat(i)) << '\n'; });
  finish(out, path);
}

}  // namespace detail

/// CSV: header x1,...,xd,value, interior nodes with x1 fastest, 9
/// significant digits, sentinel as `inf`. VTK: legacy ASCII structured
/// points, float scalars, sentinel as 1e9.
template <std::size_t D>
void export_field(const NodeField<D>& field, const std::filesystem::path& path, ExportFormat format,
                  const std::string& name = "value") {
  if (format == ExportFormat::csv)
    detail::write_csv(field.grid, path, [&](std::size_t n) { return detail::csv_value(field[n]); });
  else
    detail::write_vtk(field.grid, path, name, "float", [&](std::size_t n) {
      return is_infinite(field[n]) ? std::string("1e9") : detail::format_g9(static_cast<float>(field[n]));
    });
}

/// Integer colors; negative codes as in patchy::code.
template <std::size_t D>
void export_patch_map(const PatchMap<D>& map, const std::filesystem::path& path, ExportFormat format) {
  auto cell = [&](std::size_t n) { return std::to_string(map.color[n]); };
  if (format == ExportFormat::csv)
    detail::write_csv(map.grid, path, cell);
  else
    detail::write_vtk(map.grid, path, "patch", "int", cell);
}

/// Inverse of the CSV export on a known grid. Rows must list every interior
/// node in export order.
template <std::size_t D>
NodeField<D> import_field_csv(const Grid<D>& grid, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
  NodeField<D> f(grid, kInfinity);
  std::size_t row = 0;
  bool ok = true;
  auto parse_row = [&](const NodeIndex<D>& i) {
    if (!ok) return;
    if (!std::getline(in, line)) {
      ok = false;
      return;
    }
    ++row;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      ok = false;
      return;
    }
    const std::string cell = line.substr(comma + 1);
    const Point<D> x = grid.coord(i);
    std::istringstream coords(line.substr(0, comma));
    std::string part;
    for (std::size_t a = 0; a < D && ok; ++a) {
      ok = static_cast<bool>(std::getline(coords, part, ','));
      if (ok) ok = std::abs(std::stod(part) - x[a]) <= 1e-6 * grid.spacing(a);
    }
    if (!ok) return;
    f[grid.flat(i)] = cell == "inf" ? kInfinity : std::stod(cell);
  };
  try {
    grid.for_each_interior(parse_row);
  } catch (const std::logic_error&) {  // std::stod on a malformed number
    ok = false;
  }
  if (!ok) throw IoError("'" + path.string() + "' does not match the grid at row " + std::to_string(row));
  return f;
}

template <std::size_t D>
void export_trajectory_csv(const Trajectory<D>& t, const std::filesystem::path& path) {
  std::ofstream out = detail::open_output(path);
  for (std::size_t a = 0; a < D; ++a) out << 'x' << a + 1 << (a + 1 < D ? "," : "\n");
  for (const Point<D>& p : t.points)
    for (std::size_t a = 0; a < D; ++a) out << detail::format_g9(p[a]) << (a + 1 < D ? "," : "\n");
  detail::finish(out, path);
}

}  // namespace patchy
