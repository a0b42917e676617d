#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <set>
#include <tuple>

namespace oracle {

Eigen::VectorXd jacobi_singular_values(const Eigen::MatrixXd& a_in, Eigen::MatrixXd* u_out) {
  // Rotate the columns of W until they are mutually orthogonal. For a wide
  // input W = A^T and the accumulated rotations are A's left singular
  // vectors; for a tall input W = A and they come from the column norms.
  const bool wide = a_in.rows() < a_in.cols();
  Eigen::MatrixXd w = wide ? Eigen::MatrixXd(a_in.transpose()) : a_in;
  const Eigen::Index n = w.cols();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<std::pair<double, Eigen::Index>> sv;
  for (Eigen::Index j = 0; j < n; ++j) sv.emplace_back(w.col(j).norm(), j);
  std::sort(sv.begin(), sv.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  const Eigen::Index k = std::min(a_in.rows(), a_in.cols());
  Eigen::VectorXd out(k);
  if (u_out) u_out->setZero(a_in.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto [sigma, col] = sv[static_cast<std::size_t>(j)];
    out(j) = sigma;
    if (!u_out) continue;
    if (wide)
      u_out->col(j) = v.col(col);
    else if (sigma > 0)
      u_out->col(j) = w.col(col) / sigma;
  }
  return out;
}

Eigen::MatrixXd qr_fitted_values(const Eigen::MatrixXd& a_in, const Eigen::MatrixXd& b, double tol) {
  // Modified Gram-Schmidt, run twice for stability, skipping columns whose
  // residual norm falls below tol relative to the largest column norm.
  const double scale = a_in.colwise().norm().maxCoeff();
  std::vector<Eigen::VectorXd> q;
  for (Eigen::Index j = 0; j < a_in.cols(); ++j) {
    Eigen::VectorXd v = a_in.col(j);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& qi : q) v -= qi.dot(v) * qi;
    const double nv = v.norm();
    if (nv > tol * scale) q.push_back(v / nv);
  }
  Eigen::MatrixXd fitted = Eigen::MatrixXd::Zero(b.rows(), b.cols());
  for (const auto& qi : q) fitted += qi * (qi.transpose() * b);
  return fitted;
}

std::map<std::int64_t, std::map<int, Eigen::Vector3d>> brute_force_bins(const std::vector<BinRecord>& records,
                                                                         std::int64_t bin_ms,
                                                                         const std::map<int, std::int64_t>& offsets) {
  std::vector<BinRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(),
            [](const BinRecord& a, const BinRecord& b) { return std::tie(a.array, a.ts) < std::tie(b.array, b.ts); });
  std::map<std::int64_t, std::map<int, std::pair<Eigen::Vector3d, int>>> sums;
  for (const auto& r : sorted) {
    std::int64_t ts = r.ts;
    if (auto it = offsets.find(r.array); it != offsets.end()) ts -= it->second;
    // Walk to the bin start rather than dividing.
    std::int64_t start = 0;
    if (ts >= 0) {
      while (start + bin_ms <= ts) start += bin_ms;
    } else {
      while (start > ts) start -= bin_ms;
    }
    auto [it, fresh] = sums[start].try_emplace(r.array, Eigen::Vector3d::Zero(), 0);
    it->second.first += r.d;
    ++it->second.second;
  }
  std::map<std::int64_t, std::map<int, Eigen::Vector3d>> out;
  for (const auto& [start, per_array] : sums)
    for (const auto& [a, acc] : per_array) out[start][a] = (acc.first / acc.second).normalized();
  return out;
}

double xcorr_delay(const std::vector<double>& x, const std::vector<double>& y, double max_lag) {
  const std::size_t n = x.size();
  const double pi = std::numbers::pi;
  std::vector<std::complex<double>> cross(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> xk = 0, yk = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto w = std::polar(1.0, -2.0 * pi * static_cast<double>(k * i % n) / static_cast<double>(n));
      xk += x[i] * w;
      yk += y[i] * w;
    }
    cross[k] = yk * std::conj(xk);
  }
  auto corr = [&](double lag) {
    double s = 0.0;
    for (std::size_t k = 0; k <= n / 2; ++k) {
      const double wgt = (k == 0 || k == n / 2) ? 1.0 : 2.0;
      s += wgt * (cross[k] * std::polar(1.0, 2.0 * pi * static_cast<double>(k) * lag / static_cast<double>(n))).real();
    }
    return s;
  };
  const double step = 0.01;
  double best = -max_lag, best_v = corr(best);
  for (double lag = -max_lag; lag <= max_lag; lag += step) {
    const double v = corr(lag);
    if (v > best_v) {
      best_v = v;
      best = lag;
    }
  }
  const double ym = corr(best - step), yp = corr(best + step);
  const double denom = ym - 2.0 * best_v + yp;
  return denom == 0.0 ? best : best + 0.5 * step * (ym - yp) / denom;
}

Eigen::VectorXd intersect_rays(const std::vector<Eigen::VectorXd>& origins, const std::vector<Eigen::VectorXd>& dirs) {
  const Eigen::Index n = origins.front().size();
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const Eigen::VectorXd u = dirs[i].normalized();
    const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n) - u * u.transpose();
    lhs += p;
    rhs += p * origins[i];
  }
  return lhs.ldlt().solve(rhs);
}

namespace {

using P = Eigen::Vector3d;

std::array<long long, 3> key(const P& p) {
  return {std::llround(p.x() * 1e9), std::llround(p.y() * 1e9), std::llround(p.z() * 1e9)};
}

}  // namespace

GridCounts icosphere_counts(int level) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<P> v;
  for (double s1 : {-1.0, 1.0})
    for (double s2 : {-phi, phi}) {
      v.emplace_back(0, s1, s2);
      v.emplace_back(s1, s2, 0);
      v.emplace_back(s2, 0, s1);
    }
  // Rodrigues rotation taking (0,1,phi)/|.| onto +z.
  const P from = P(0, 1, phi).normalized();
  const P to(0, 0, 1);
  const P axis = from.cross(to).normalized();
  const double ang = std::acos(from.dot(to));
  auto rot = [&](const P& p) {
    return P(p * std::cos(ang) + axis.cross(p) * std::sin(ang) + axis * axis.dot(p) * (1 - std::cos(ang)));
  };
  std::vector<std::array<P, 3>> faces;
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = i + 1; j < 12; ++j)
      for (std::size_t k = j + 1; k < 12; ++k)
        if (std::abs((v[i] - v[j]).norm() - 2) < 1e-9 && std::abs((v[j] - v[k]).norm() - 2) < 1e-9 &&
            std::abs((v[i] - v[k]).norm() - 2) < 1e-9)
          faces.push_back({rot(v[i].normalized()), rot(v[j].normalized()), rot(v[k].normalized())});
  for (int l = 0; l < level; ++l) {
    std::vector<std::array<P, 3>> next;
    for (const auto& f : faces) {
      const P a = (f[0] + f[1]).normalized(), b = (f[1] + f[2]).normalized(), c = (f[0] + f[2]).normalized();
      next.push_back({f[0], a, c});
      next.push_back({a, f[1], b});
      next.push_back({c, b, f[2]});
      next.push_back({a, b, c});
    }
    faces = std::move(next);
  }
  std::map<std::array<long long, 3>, P> uniq;
  for (const auto& f : faces)
    for (const auto& p : f) uniq.emplace(key(p), p);
  GridCounts c;
  c.full = uniq.size();
  for (const auto& [k, p] : uniq) {
    if (p.z() >= -1e-9) ++c.upper;
    if (std::abs(p.z()) < 1e-9) ++c.equator;
  }
  return c;
}

double angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace oracle
