#include "lift3d/pointcloud.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lift3d/errors.hpp"

namespace lift3d {

namespace {

void check_finite(const std::vector<std::array<double, 3>>& points) {
  for (const auto& p : points)
    for (double c : p)
      if (!std::isfinite(c)) throw InvalidInputError("pointcloud export: non-finite point");
}

}  // namespace

void export_pointcloud_ply(const std::string& path,
                           const std::vector<std::array<double, 3>>& points) {
  check_finite(points);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write PLY: " + path);
  out << "ply\n"
      << "format ascii 1.0\n"
      << "element vertex " << points.size() << "\n"
      << "property double x\n"
      << "property double y\n"
      << "property double z\n"
      << "end_header\n";
  char line[128];
  for (const auto& p : points) {
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
    out << line;
  }
  if (!out) throw IoError("failed while writing PLY: " + path);
}

void export_pointcloud_csv(const std::string& path,
                           const std::vector<std::array<double, 3>>& points) {
  check_finite(points);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write CSV: " + path);
  out.precision(17);
  out << "x,y,z\n";
  for (const auto& p : points) out << p[0] << "," << p[1] << "," << p[2] << "\n";
  if (!out) throw IoError("failed while writing CSV: " + path);
}

std::vector<std::array<double, 3>> read_pointcloud_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "x,y,z")
    throw InvalidInputError("pointcloud CSV: missing x,y,z header in " + path);
  std::vector<std::array<double, 3>> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 3> p;
    std::istringstream row(line);
    std::string cell;
    for (std::size_t a = 0; a < 3; ++a) {
      if (!std::getline(row, cell, a == 2 ? '\n' : ','))
        throw InvalidInputError("pointcloud CSV: malformed row '" + line + "'");
      p[a] = std::stod(cell);
    }
    points.push_back(p);
  }
  return points;
}

}  // namespace lift3d
