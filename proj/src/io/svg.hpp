#pragma once

#include <string>
#include <vector>

#include "common.hpp"

namespace entnas {

struct ChartSeries {
  std::string label;
  std::vector<real> y;  // one value per x position
};

// Static line chart as a standalone vector graphic. Rendering is fully
// deterministic: fixed palette, fixed float formatting, no timestamps. The
// x axis spans exactly the given positions.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<int>& x, const std::vector<ChartSeries>& series);

}  // namespace entnas
