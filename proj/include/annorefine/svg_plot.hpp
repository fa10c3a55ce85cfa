#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace annorefine {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;  // empty = pick from the default palette
  bool dashed = false;
};

// Standalone SVG line chart. Non-finite samples break the polyline.
std::string RenderLinePlot(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<PlotSeries>& series);

void WriteLinePlot(const std::filesystem::path& path, const std::string& title,
                   const std::string& x_label, const std::string& y_label,
                   const std::vector<PlotSeries>& series);

}  // namespace annorefine
