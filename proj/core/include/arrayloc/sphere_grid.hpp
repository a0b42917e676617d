#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

namespace arrayloc {

using Vec3 = Eigen::Vector3d;

/// Unit direction on the upper (z >= 0) half-sphere of an array's local frame.
class DoaVector {
 public:
  static constexpr double kNormTolerance = 1e-9;

  DoaVector() : v_(0.0, 0.0, 1.0) {}

  /// Throws InvalidArgument unless |v| = 1 within `tol` and v.z >= -tol.
  static DoaVector from_unit(const Vec3& v, double tol = kNormTolerance);

  /// Normalizes `v` and clamps a negative z to zero before renormalizing.
  /// Throws InvalidArgument on a zero (or fully clamped-away) vector.
  static DoaVector normalized(const Vec3& v);

  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  const Vec3& vec() const { return v_; }

  friend bool operator==(const DoaVector& a, const DoaVector& b) { return a.v_ == b.v_; }

 private:
  explicit DoaVector(const Vec3& v) : v_(v) {}
  Vec3 v_;
};

/// Angle between two directions in radians. Uses atan2 so it stays accurate
/// for nearly parallel vectors.
double angle_between(const Vec3& a, const Vec3& b);

double deg2rad(double deg);
double rad2deg(double rad);

/// Geodesic discretization of the DOA half-sphere.
struct HalfSphereGrid {
  int level = 0;
  std::vector<DoaVector> points;
  /// Mesh adjacency among retained points (edges of the subdivided
  /// icosahedron), sorted ascending.
  std::vector<std::vector<std::size_t>> neighbors;

  std::size_t size() const { return points.size(); }
  /// Index of the grid point with the smallest angle to `direction`.
  /// Ties resolve to the lowest index.
  std::size_t nearest(const Vec3& direction) const;
  /// Number of mesh edges between two grid points (breadth-first search).
  std::size_t hop_distance(std::size_t from, std::size_t to) const;
};

/// Recursively subdivides an icosahedron with one vertex at +z and keeps the
/// z >= 0 vertices, sorted by (z, y, x). Throws InvalidArgument for level
/// outside [0, 8].
HalfSphereGrid build_halfsphere_grid(int level);

/// Shared level-4 grid (1321 points), built on first use.
const HalfSphereGrid& default_grid();

/// Per-point angle (degrees) to the nearest other grid point.
std::vector<double> nearest_neighbor_angles(const HalfSphereGrid& grid);

/// CSV with header `idx,x,y,z`.
void write_grid_csv(std::ostream& out, const HalfSphereGrid& grid);

struct ArrayGeometry {
  std::vector<Vec3> mic_positions;
  double speed_of_sound = 343.0;
  double sample_rate = 16000.0;

  /// 8 microphones evenly spaced on a 10 cm diameter circle in z = 0,
  /// microphone 0 on +x.
  static ArrayGeometry circular(std::size_t mics = 8, double diameter_m = 0.10);

  std::size_t mic_count() const { return mic_positions.size(); }
  std::size_t pair_count() const { return mic_count() * (mic_count() - 1) / 2; }
};

struct MicPair {
  std::size_t p;
  std::size_t q;
};

/// Unordered pairs (p, q), p < q, in lexicographic order.
std::vector<MicPair> mic_pairs(std::size_t mic_count);

/// Plane-wave TDOAs in samples, one per mic_pairs() entry:
///   tau[p,q] = fs * (m_p - m_q) . d / c
/// A positive value means the wavefront reaches mic p that many samples
/// *before* mic q (p lies further along the propagation-source direction).
/// `direction` must be unit norm; it is not restricted to the half-sphere.
std::vector<double> tdoa_for_doa(const ArrayGeometry& geom, const Vec3& direction);

}  // namespace arrayloc
