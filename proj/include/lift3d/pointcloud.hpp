#pragma once

#include <array>
#include <string>
#include <vector>

namespace lift3d {

// ASCII PLY with double x/y/z properties, 9 significant digits per value.
void export_pointcloud_ply(const std::string& path,
                           const std::vector<std::array<double, 3>>& points);

// CSV with an "x,y,z" header and full-precision values.
void export_pointcloud_csv(const std::string& path,
                           const std::vector<std::array<double, 3>>& points);

std::vector<std::array<double, 3>> read_pointcloud_csv(const std::string& path);

}  // namespace lift3d
