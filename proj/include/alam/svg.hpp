#pragma once

#include <string>
#include <vector>

namespace alam {

// Minimal deterministic SVG charts; fixed canvas, %.6g numbers, no clocks.

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct LinePlotSpec {
  std::string title, xlabel, ylabel;
  bool log_y = false;
  double shade_from_x = 0.0;  // shade [shade_from_x, xmax]; disabled when <= xmin
  bool shade = false;
  std::vector<Series> series;
};

void write_line_plot(const LinePlotSpec& spec, const std::string& path);

struct BarChartSpec {
  std::string title, ylabel;
  std::vector<std::pair<std::string, double>> bars;
  std::vector<std::pair<double, double>> error_bars;  // optional, per bar (lo, hi)
};

void write_bar_chart(const BarChartSpec& spec, const std::string& path);

}  // namespace alam
