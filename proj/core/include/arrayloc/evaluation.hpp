#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "arrayloc/sphere_grid.hpp"

namespace arrayloc {

struct ErrorMetrics {
  std::size_t count = 0;
  double rmse = 0.0;        ///< sqrt(mean ||est - truth||^2)
  Eigen::VectorXd bias;     ///< mean(est - truth)
};

/// Rows are observations. Both matrices must have the same shape.
ErrorMetrics position_errors(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truth);

/// Splits a piecewise-straight path into legs: a new leg starts whenever the
/// heading of consecutive displacements turns by more than `turn_deg`.
/// Zero-length steps inherit the current leg.
std::vector<int> legs_from_heading(const Eigen::MatrixXd& truth, double turn_deg = 30.0);

struct ShapeMetrics {
  std::vector<Eigen::VectorXd> corners;  ///< intersections of consecutive leg lines
  std::vector<double> sides;             ///< distances between consecutive corners
  /// For four sides: mean of the longer opposite pair over the shorter pair.
  double long_short_ratio = 0.0;
  double long_side = 0.0;
  double short_side = 0.0;
};

/// Fits a line to the points of each leg and intersects consecutive lines.
/// When `closed`, the last leg is also intersected with the first.
ShapeMetrics polygon_shape(const Eigen::MatrixXd& points, const std::vector<int>& legs, bool closed);

/// Least-squares affine fit truth ~ intercept + C * est (rows are samples).
struct LinearFit {
  Eigen::VectorXd intercept;
  Eigen::MatrixXd coeffs;  ///< truth_dim x est_dim
};
LinearFit fit_linear(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truth);

/// Mean squared distance of each row from the centroid (trace of the
/// covariance).
double spread(const Eigen::MatrixXd& points);

/// Row indices of 2-D `points` sorted by angle about their centroid.
std::vector<std::size_t> angular_order(const std::vector<Eigen::VectorXd>& points);

/// True if both sequences list the same cycle, up to rotation and reversal.
bool same_cyclic_order(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

}  // namespace arrayloc
