#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace arrayloc::cli {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_scatter_svg(std::ostream& out, const std::vector<SvgSeries>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label) {
  constexpr double kSize = 560.0, kMargin = 60.0;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
      if (!std::isfinite(s.points(i, 0)) || !std::isfinite(s.points(i, 1))) continue;
      xmin = std::min(xmin, s.points(i, 0));
      xmax = std::max(xmax, s.points(i, 0));
      ymin = std::min(ymin, s.points(i, 1));
      ymax = std::max(ymax, s.points(i, 1));
    }
  }
  if (!std::isfinite(xmin)) xmin = ymin = 0.0, xmax = ymax = 1.0;
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-9}) * 1.1;
  const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
  const double scale = kSize / span;
  auto px = [&](double x) { return kMargin + kSize / 2 + (x - cx) * scale; };
  auto py = [&](double y) { return kMargin + kSize / 2 - (y - cy) * scale; };

  const double w = kSize + 2 * kMargin;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << w << "\" viewBox=\"0 0 " << w
      << ' ' << w << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << escape(title) << "</text>\n";
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"" << w - 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"13\">" << escape(x_label) << " [" << fmt(cx - span / 2) << ", " << fmt(cx + span / 2)
      << "]</text>\n";
  out << "<text x=\"18\" y=\"" << w / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
      << "transform=\"rotate(-90 18 " << w / 2 << ")\">" << escape(y_label) << " [" << fmt(cy - span / 2) << ", "
      << fmt(cy + span / 2) << "]</text>\n";

  double legend_y = kMargin + 16;
  for (const auto& s : series) {
    if (s.polyline) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (Eigen::Index i = 0; i < s.points.rows(); ++i)
        out << fmt(px(s.points(i, 0))) << ',' << fmt(py(s.points(i, 1))) << ' ';
      out << "\"/>\n";
    } else {
      out << "<g fill=\"" << s.color << "\" fill-opacity=\"0.6\">\n";
      for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
        if (!std::isfinite(s.points(i, 0)) || !std::isfinite(s.points(i, 1))) continue;
        out << "<circle cx=\"" << fmt(px(s.points(i, 0))) << "\" cy=\"" << fmt(py(s.points(i, 1))) << "\" r=\"2\"/>\n";
      }
      out << "</g>\n";
    }
    out << "<text x=\"" << kMargin + 8 << "\" y=\"" << legend_y << "\" font-family=\"sans-serif\" font-size=\"12\" "
        << "fill=\"" << s.color << "\">" << escape(s.label) << "</text>\n";
    legend_y += 16;
  }
  out << "</svg>\n";
}

}  // namespace arrayloc::cli
