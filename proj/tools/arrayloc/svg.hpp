#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace arrayloc::cli {

struct SvgSeries {
  std::string label;
  std::string color;
  Eigen::MatrixXd points;  ///< rows are (x, y)
  bool polyline = false;
};

/// Equal-aspect scatter plot of 2-D series. Pure view: it only reads data.
void write_scatter_svg(std::ostream& out, const std::vector<SvgSeries>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label);

}  // namespace arrayloc::cli
