#pragma once

#include <string>
#include <vector>

namespace bapolab {

struct ChartSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  // non-finite points are skipped
};

// Minimal diagnostic line chart: axes with ticks, one polyline per series,
// legend. Output is deterministic for identical inputs.
std::string render_line_chart(const std::vector<ChartSeries>& series, const std::string& x_label,
                              const std::string& y_label);

}  // namespace bapolab
