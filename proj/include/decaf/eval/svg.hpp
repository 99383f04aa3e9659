#pragma once

#include <string>
#include <vector>

namespace decaf::eval {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

/// Minimal polyline chart with axes, ticks and a legend. Output depends only
/// on the inputs (fixed number formatting).
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);

}  // namespace decaf::eval
