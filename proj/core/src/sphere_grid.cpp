#include "arrayloc/sphere_grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>

#include <Eigen/Geometry>

#include "arrayloc/errors.hpp"

namespace arrayloc {

DoaVector DoaVector::from_unit(const Vec3& v, double tol) {
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > tol) {
    throw InvalidArgument("DOA vector is not unit norm");
  }
  if (v.z() < -tol) {
    throw InvalidArgument("DOA vector lies below the array half-sphere");
  }
  Vec3 u = v;
  if (u.z() < 0.0) u.z() = 0.0;
  return DoaVector(u);
}

DoaVector DoaVector::normalized(const Vec3& v) {
  if (!v.allFinite()) throw InvalidArgument("DOA vector has non-finite components");
  Vec3 u = v;
  if (u.z() < 0.0) u.z() = 0.0;
  const double n = u.norm();
  if (n <= std::numeric_limits<double>::min()) {
    throw InvalidArgument("cannot normalize a zero DOA vector");
  }
  return DoaVector(u / n);
}

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

double deg2rad(double deg) { return deg * M_PI / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / M_PI; }

namespace {

using Face = std::array<std::size_t, 3>;

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
};

Mesh icosahedron() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  Mesh mesh;
  for (double a : {-1.0, 1.0}) {
    for (double b : {-1.0, 1.0}) {
      mesh.vertices.emplace_back(0.0, a, b * phi);
      mesh.vertices.emplace_back(a, b * phi, 0.0);
      mesh.vertices.emplace_back(b * phi, 0.0, a);
    }
  }
  for (auto& v : mesh.vertices) v.normalize();

  // Bring (0, 1, phi) to the zenith.
  const Vec3 top = Vec3(0.0, 1.0, phi).normalized();
  const Eigen::Matrix3d rot =
      Eigen::Quaterniond::FromTwoVectors(top, Vec3::UnitZ()).toRotationMatrix();
  for (auto& v : mesh.vertices) v = (rot * v).normalized();

  // Faces are the triples of mutually adjacent vertices.
  const std::size_t n = mesh.vertices.size();
  double edge = std::numeric_limits<double>::max();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      edge = std::min(edge, (mesh.vertices[i] - mesh.vertices[j]).norm());
  auto adjacent = [&](std::size_t i, std::size_t j) {
    return std::abs((mesh.vertices[i] - mesh.vertices[j]).norm() - edge) < 1e-9;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k)
        if (adjacent(i, j) && adjacent(j, k) && adjacent(i, k)) mesh.faces.push_back({i, j, k});
  return mesh;
}

void subdivide(Mesh& mesh) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> midpoints;
  auto midpoint = [&](std::size_t a, std::size_t b) {
    const auto key = std::minmax(a, b);
    auto it = midpoints.find(key);
    if (it != midpoints.end()) return it->second;
    mesh.vertices.push_back((mesh.vertices[a] + mesh.vertices[b]).normalized());
    const std::size_t idx = mesh.vertices.size() - 1;
    midpoints.emplace(key, idx);
    return idx;
  };
  std::vector<Face> faces;
  faces.reserve(mesh.faces.size() * 4);
  for (const Face& f : mesh.faces) {
    const std::size_t ab = midpoint(f[0], f[1]);
    const std::size_t bc = midpoint(f[1], f[2]);
    const std::size_t ca = midpoint(f[2], f[0]);
    faces.push_back({f[0], ab, ca});
    faces.push_back({f[1], bc, ab});
    faces.push_back({f[2], ca, bc});
    faces.push_back({ab, bc, ca});
  }
  mesh.faces = std::move(faces);
}

constexpr double kEquatorTolerance = 1e-12;

}  // namespace

HalfSphereGrid build_halfsphere_grid(int level) {
  if (level < 0 || level > 8) {
    throw InvalidArgument("grid level must be in [0, 8], got " + std::to_string(level));
  }
  Mesh mesh = icosahedron();
  for (int l = 0; l < level; ++l) subdivide(mesh);

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    Vec3& v = mesh.vertices[i];
    if (std::abs(v.z()) < kEquatorTolerance) v.z() = 0.0;
    if (v.z() >= 0.0) kept.push_back(i);
  }
  // Sort on the exact values that end up in the grid.
  std::vector<DoaVector> unit(mesh.vertices.size());
  for (std::size_t i : kept) unit[i] = DoaVector::normalized(mesh.vertices[i]);
  std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
    const Vec3& u = unit[a].vec();
    const Vec3& v = unit[b].vec();
    if (u.z() != v.z()) return u.z() < v.z();
    if (u.y() != v.y()) return u.y() < v.y();
    return u.x() < v.x();
  });

  constexpr std::size_t kDropped = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> remap(mesh.vertices.size(), kDropped);
  HalfSphereGrid grid;
  grid.level = level;
  grid.points.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    remap[kept[i]] = i;
    grid.points.push_back(unit[kept[i]]);
  }

  grid.neighbors.assign(kept.size(), {});
  for (const Face& f : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      const std::size_t a = remap[f[e]];
      const std::size_t b = remap[f[(e + 1) % 3]];
      if (a == kDropped || b == kDropped) continue;
      grid.neighbors[a].push_back(b);
      grid.neighbors[b].push_back(a);
    }
  }
  for (auto& nb : grid.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return grid;
}

const HalfSphereGrid& default_grid() {
  static const HalfSphereGrid grid = build_halfsphere_grid(4);
  return grid;
}

std::size_t HalfSphereGrid::nearest(const Vec3& direction) const {
  std::size_t best = 0;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = points[i].vec().dot(direction);
    if (d > best_dot) {
      best_dot = d;
      best = i;
    }
  }
  return best;
}

std::size_t HalfSphereGrid::hop_distance(std::size_t from, std::size_t to) const {
  if (from >= size() || to >= size()) throw InvalidArgument("grid index out of range");
  if (from == to) return 0;
  std::vector<std::size_t> dist(size(), std::numeric_limits<std::size_t>::max());
  std::deque<std::size_t> queue{from};
  dist[from] = 0;
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    for (std::size_t nb : neighbors[cur]) {
      if (dist[nb] != std::numeric_limits<std::size_t>::max()) continue;
      dist[nb] = dist[cur] + 1;
      if (nb == to) return dist[nb];
      queue.push_back(nb);
    }
  }
  return dist[to];
}

std::vector<double> nearest_neighbor_angles(const HalfSphereGrid& grid) {
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < grid.size(); ++j) {
      if (i == j) continue;
      best = std::min(best, angle_between(grid.points[i].vec(), grid.points[j].vec()));
    }
    out[i] = rad2deg(best);
  }
  return out;
}

void write_grid_csv(std::ostream& out, const HalfSphereGrid& grid) {
  const auto old_precision = out.precision(17);
  out << "idx,x,y,z\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec3& p = grid.points[i].vec();
    out << i << ',' << p.x() << ',' << p.y() << ',' << p.z() << '\n';
  }
  out.precision(old_precision);
}

ArrayGeometry ArrayGeometry::circular(std::size_t mics, double diameter_m) {
  ArrayGeometry geom;
  const double radius = diameter_m / 2.0;
  for (std::size_t m = 0; m < mics; ++m) {
    const double theta = 2.0 * M_PI * static_cast<double>(m) / static_cast<double>(mics);
    geom.mic_positions.emplace_back(radius * std::cos(theta), radius * std::sin(theta), 0.0);
  }
  return geom;
}

std::vector<MicPair> mic_pairs(std::size_t mic_count) {
  std::vector<MicPair> pairs;
  for (std::size_t p = 0; p < mic_count; ++p)
    for (std::size_t q = p + 1; q < mic_count; ++q) pairs.push_back({p, q});
  return pairs;
}

std::vector<double> tdoa_for_doa(const ArrayGeometry& geom, const Vec3& direction) {
  if (!direction.allFinite() || std::abs(direction.norm() - 1.0) > 1e-9) {
    throw InvalidArgument("tdoa_for_doa requires a unit-norm direction");
  }
  const double scale = geom.sample_rate / geom.speed_of_sound;
  std::vector<double> proj(geom.mic_count());
  for (std::size_t m = 0; m < geom.mic_count(); ++m) {
    proj[m] = geom.mic_positions[m].dot(direction);
  }
  std::vector<double> tdoas;
  tdoas.reserve(geom.pair_count());
  for (const MicPair& pq : mic_pairs(geom.mic_count())) {
    tdoas.push_back(scale * (proj[pq.p] - proj[pq.q]));
  }
  return tdoas;
}

}  // namespace arrayloc
