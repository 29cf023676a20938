// Internal SVG emission for sensitivity plots.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hsam::detail {

struct PlotPoint {
  double x = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotPoint> points;          // x ascending
  std::optional<double> reference;        // dashed horizontal line
  std::string reference_label;
  bool log_x = true;
  bool log_y = true;
};

void write_sensitivity_svg(const std::filesystem::path& path, const PlotSpec& spec);

}  // namespace hsam::detail
