#include "arrayloc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "arrayloc/errors.hpp"

namespace arrayloc {

ErrorMetrics position_errors(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truth) {
  if (estimates.rows() != truth.rows() || estimates.cols() != truth.cols()) {
    throw InvalidArgument("estimate and truth shapes differ");
  }
  ErrorMetrics m;
  m.count = static_cast<std::size_t>(estimates.rows());
  if (m.count == 0) {
    m.bias = Eigen::VectorXd::Zero(estimates.cols());
    return m;
  }
  const Eigen::MatrixXd diff = estimates - truth;
  m.rmse = std::sqrt(diff.rowwise().squaredNorm().mean());
  m.bias = diff.colwise().mean().transpose();
  return m;
}

std::vector<int> legs_from_heading(const Eigen::MatrixXd& truth, double turn_deg) {
  std::vector<int> legs(static_cast<std::size_t>(truth.rows()), 0);
  const double cos_turn = std::cos(deg2rad(turn_deg));
  int leg = 0;
  Eigen::VectorXd heading;
  for (Eigen::Index r = 1; r < truth.rows(); ++r) {
    const Eigen::VectorXd step = truth.row(r) - truth.row(r - 1);
    const double len = step.norm();
    if (len > 1e-12) {
      const Eigen::VectorXd dir = step / len;
      if (heading.size() > 0 && heading.dot(dir) < cos_turn) ++leg;
      heading = dir;
    }
    legs[static_cast<std::size_t>(r)] = leg;
  }
  return legs;
}

namespace {

struct Line {
  Eigen::VectorXd point;
  Eigen::VectorXd direction;
};

Line fit_line(const Eigen::MatrixXd& pts) {
  const Eigen::VectorXd centroid = pts.colwise().mean().transpose();
  const Eigen::MatrixXd centered = pts.rowwise() - centroid.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  return {centroid, svd.matrixV().col(0)};
}

// Midpoint of the closest points of two lines.
Eigen::VectorXd intersect(const Line& a, const Line& b) {
  Eigen::MatrixXd m(a.point.size(), 2);
  m.col(0) = a.direction;
  m.col(1) = -b.direction;
  const Eigen::Vector2d t = m.colPivHouseholderQr().solve(b.point - a.point);
  return 0.5 * ((a.point + t(0) * a.direction) + (b.point + t(1) * b.direction));
}

}  // namespace

ShapeMetrics polygon_shape(const Eigen::MatrixXd& points, const std::vector<int>& legs, bool closed) {
  if (static_cast<Eigen::Index>(legs.size()) != points.rows()) throw InvalidArgument("one leg label per point");
  std::vector<int> ids;
  for (int l : legs)
    if (ids.empty() || ids.back() != l) ids.push_back(l);
  std::vector<Line> lines;
  for (int id : ids) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < legs.size(); ++i)
      if (legs[i] == id) rows.push_back(static_cast<Eigen::Index>(i));
    if (rows.size() < 2) throw InvalidArgument("each leg needs at least two points");
    lines.push_back(fit_line(points(rows, Eigen::all)));
  }
  ShapeMetrics s;
  if (lines.size() < 2) return s;
  if (closed) s.corners.push_back(intersect(lines.back(), lines.front()));
  for (std::size_t i = 0; i + 1 < lines.size(); ++i) s.corners.push_back(intersect(lines[i], lines[i + 1]));
  const std::size_t n = s.corners.size();
  for (std::size_t i = 0; i + 1 < n; ++i) s.sides.push_back((s.corners[i + 1] - s.corners[i]).norm());
  if (closed && n > 2) s.sides.push_back((s.corners.front() - s.corners.back()).norm());
  if (s.sides.size() == 4) {
    const double a = 0.5 * (s.sides[0] + s.sides[2]);
    const double b = 0.5 * (s.sides[1] + s.sides[3]);
    s.long_side = std::max(a, b);
    s.short_side = std::min(a, b);
    s.long_short_ratio = s.short_side > 0.0 ? s.long_side / s.short_side : 0.0;
  } else if (!s.sides.empty()) {
    s.long_side = *std::max_element(s.sides.begin(), s.sides.end());
    s.short_side = *std::min_element(s.sides.begin(), s.sides.end());
    s.long_short_ratio = s.short_side > 0.0 ? s.long_side / s.short_side : 0.0;
  }
  return s;
}

LinearFit fit_linear(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truth) {
  if (estimates.rows() != truth.rows() || estimates.rows() <= estimates.cols()) {
    throw InvalidArgument("linear fit needs matching rows and more rows than estimate columns");
  }
  Eigen::MatrixXd design(estimates.rows(), estimates.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(estimates.cols()) = estimates;
  const Eigen::MatrixXd sol = design.colPivHouseholderQr().solve(truth);
  LinearFit fit;
  fit.intercept = sol.row(0).transpose();
  fit.coeffs = sol.bottomRows(estimates.cols()).transpose();
  return fit;
}

double spread(const Eigen::MatrixXd& points) {
  if (points.rows() == 0) return 0.0;
  const Eigen::RowVectorXd centroid = points.colwise().mean();
  return (points.rowwise() - centroid).rowwise().squaredNorm().mean();
}

std::vector<std::size_t> angular_order(const std::vector<Eigen::VectorXd>& points) {
  if (points.empty()) return {};
  Eigen::VectorXd centroid = Eigen::VectorXd::Zero(points.front().size());
  for (const auto& p : points) {
    if (p.size() < 2 || p.size() != centroid.size()) throw InvalidArgument("angular order needs 2-D points");
    centroid += p;
  }
  centroid /= static_cast<double>(points.size());
  std::vector<double> angle(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    angle[i] = std::atan2(points[i](1) - centroid(1), points[i](0) - centroid(0));
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return angle[x] < angle[y]; });
  return order;
}

bool same_cyclic_order(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) return false;
  const std::size_t n = a.size();
  if (n == 0) return true;
  for (int dir : {1, -1}) {
    for (std::size_t shift = 0; shift < n; ++shift) {
      bool match = true;
      for (std::size_t i = 0; i < n && match; ++i) {
        const std::size_t j = dir == 1 ? (shift + i) % n : (shift + n - i) % n;
        match = a[i] == b[j];
      }
      if (match) return true;
    }
  }
  return false;
}

}  // namespace arrayloc
