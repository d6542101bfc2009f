#pragma once

#include "lapose/geometry.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lapose {

// Batch plotting backend emitting standalone SVG files.

// Ground-truth vs predicted trajectory projected onto the xz plane, with
// camera frustum markers at the given frame indices.
void write_trajectory_svg(const std::filesystem::path& path, const Trajectory& gt,
                          const Trajectory& pred, const std::vector<size_t>& frustum_frames,
                          const std::string& title);

void write_histogram_svg(const std::filesystem::path& path, const std::vector<double>& values,
                         double lo, double hi, int bins, const std::string& title);

// 2-D scatter colored by integer class label.
void write_scatter_svg(const std::filesystem::path& path,
                       const std::vector<std::pair<double, double>>& points,
                       const std::vector<int>& labels, const std::vector<std::string>& class_names,
                       const std::string& title);

} // namespace lapose
