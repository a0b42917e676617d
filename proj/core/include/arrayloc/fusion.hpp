#pragma once

// Localization from concatenated per-array DOA vectors without known array
// positions: PCA subspace coordinates and affine maps fit on calibration
// recordings, including maps restricted to the arrays that are active.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "arrayloc/sphere_grid.hpp"

namespace arrayloc {

/// Bit m set <=> array m is active. Supports up to 32 arrays.
using ActiveMask = std::uint32_t;
inline constexpr std::size_t kMaxArrays = 32;

ActiveMask full_mask(std::size_t arrays);
std::size_t popcount(ActiveMask mask);

/// Stacked 3M-element observation for one time instant. Inactive arrays hold
/// zero placeholders.
struct ConcatenatedDoa {
  Eigen::VectorXd values;
  std::vector<bool> active;
  std::int64_t timestamp_ms = 0;

  std::size_t arrays() const { return active.size(); }
  ActiveMask mask() const;
  std::size_t active_count() const;
  Vec3 subvector(std::size_t array) const { return values.segment<3>(3 * static_cast<Eigen::Index>(array)); }
  /// Throws DataError if an active subvector is not unit norm within 1e-6
  /// with z >= 0, or an inactive one is nonzero.
  void validate() const;
};

ConcatenatedDoa concat_doas(std::span<const std::optional<DoaVector>> per_array, std::int64_t timestamp_ms);

/// Row indices (into a 3M vector) of the arrays in `mask`, ascending.
std::vector<Eigen::Index> active_rows(ActiveMask mask, std::size_t arrays);

struct CalibrationSegment {
  int point_id = 0;
  Eigen::Index begin = 0;  ///< first column
  Eigen::Index end = 0;    ///< one past the last column
  Eigen::Index size() const { return end - begin; }
};

/// Calibration DOAs (3M x L) with the matching source locations (N x L).
struct CalibrationSet {
  Eigen::MatrixXd doas;
  Eigen::MatrixXd locations;
  std::vector<CalibrationSegment> segments;
  std::vector<std::int64_t> timestamps_ms;  ///< optional, one per column
  std::size_t arrays = 0;

  Eigen::Index columns() const { return doas.cols(); }
  int room_dim() const { return static_cast<int>(locations.rows()); }

  /// Keeps only the listed calibration points (in stored order).
  CalibrationSet subset(std::span<const int> point_ids) const;
  /// Throws DataError on inconsistent dimensions or segment bookkeeping.
  void validate() const;
  std::vector<int> point_ids() const;
};

/// Assembles a set from per-point column blocks.
class CalibrationBuilder {
 public:
  CalibrationBuilder(std::size_t arrays, int room_dim);
  void add_point(int point_id, const Eigen::VectorXd& location, std::span<const ConcatenatedDoa> observations);
  CalibrationSet build() const;

 private:
  std::size_t arrays_;
  int room_dim_;
  std::vector<std::pair<int, Eigen::VectorXd>> points_;
  std::vector<std::vector<ConcatenatedDoa>> blocks_;
};

/// Moore-Penrose pseudo-inverse via SVD; singular values below
/// rel_tol * sigma_max are treated as zero.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a, double rel_tol = 1e-10, Eigen::Index* rank = nullptr);

/// Diagnostics attached to every affine fit.
struct FitReport {
  std::size_t distinct_points = 0;
  Eigen::Index normal_matrix_rank = 0;  ///< rank of (D - d_mean 1^T) D^T
  Eigen::VectorXd normal_matrix_singular_values;
  Eigen::Index location_span = 0;  ///< affine dimension spanned by the points
  bool rank_deficient = false;
  bool line_degenerate = false;
  std::vector<std::string> warnings;
};

/// r = offset + coeffs * d_a, where d_a holds the rows of `active` arrays.
struct AffineMap {
  Eigen::VectorXd offset;  ///< N, meters
  Eigen::MatrixXd coeffs;  ///< N x 3|active|
  ActiveMask active = 0;
  std::size_t arrays = 0;
  FitReport report;

  int room_dim() const { return static_cast<int>(offset.size()); }
};

/// Closed-form least squares over the rows of `active` arrays:
///   B  = (R - r_mean 1^T) D^T [(D - d_mean 1^T) D^T]^+
///   r0 = r_mean - B d_mean
/// Throws InvalidArgument with fewer than two distinct calibration points or
/// an empty/out-of-range active set.
AffineMap fit_affine(const CalibrationSet& cal, ActiveMask active);

/// Throws ActiveSetMismatch if `d` lacks an array the map needs.
Eigen::VectorXd map_affine(const AffineMap& map, const ConcatenatedDoa& d);

/// Per-active-set cache of affine fits for one calibration set (the key is
/// the mask alone, so do not share a cache across sets). Safe for
/// concurrent use; if two
/// threads race on the same key both fits are identical and the first
/// inserted wins.
class AffineMapCache {
 public:
  /// With `reuse_full_offset`, maps for partial active sets keep the
  /// all-array offset instead of refitting it.
  explicit AffineMapCache(bool reuse_full_offset = false) : reuse_full_offset_(reuse_full_offset) {}

  std::shared_ptr<const AffineMap> get(const CalibrationSet& cal, ActiveMask active);
  std::size_t size() const;
  bool reuse_full_offset() const { return reuse_full_offset_; }

 private:
  bool reuse_full_offset_;
  mutable std::shared_mutex mutex_;
  std::map<ActiveMask, std::shared_ptr<const AffineMap>> maps_;
};

/// Maps `d` with the affine map fit on exactly d's active arrays.
/// Throws NoObservation when no array is active.
Eigen::VectorXd map_with_missing(const CalibrationSet& cal, const ConcatenatedDoa& d, AffineMapCache& cache);

struct PcaModel {
  Eigen::MatrixXd basis;  ///< 3M x J, orthonormal columns
  Eigen::VectorXd singular_values;  ///< all min(3M, L), descending
  Eigen::Index rank = 0;

  Eigen::Index components() const { return basis.cols(); }
};

/// SVD of the (uncentered) DOA matrix keeping the first J left singular
/// vectors. Each vector is sign-fixed so its largest-magnitude entry is
/// positive. Throws InvalidArgument if J exceeds the numerical rank.
PcaModel fit_pca(const Eigen::MatrixXd& doas, Eigen::Index components = 2, double rel_tol = 1e-10);
PcaModel fit_pca(const CalibrationSet& cal, Eigen::Index components = 2, double rel_tol = 1e-10);

struct PcaProjection {
  Eigen::VectorXd coefficients;
  /// Set when some arrays were inactive and their zero placeholders were
  /// projected as-is.
  bool partial = false;
};

PcaProjection project_pca(const PcaModel& model, const ConcatenatedDoa& d);

/// Euclidean distance in PCA coordinates to each calibration point's mean
/// projection, ordered like `cal.segments`.
std::vector<double> pca_proximity(const PcaModel& model, const CalibrationSet& cal, const Eigen::VectorXd& a);

/// Known (DOA, location) pair used to localize nearby observations.
struct ReferencePair {
  ConcatenatedDoa doa;
  Eigen::VectorXd location;
  std::optional<Eigen::VectorXd> coefficients;

  /// Builds a pair; with a model, also stores the PCA coefficients of `doa`.
  static ReferencePair make(ConcatenatedDoa doa, Eigen::VectorXd location, const PcaModel* model = nullptr);
};

/// r_n = r_ref + B (d_n - d_ref). Throws ActiveSetMismatch if either DOA
/// lacks an array the map needs.
Eigen::VectorXd map_from_reference(const AffineMap& map, const ReferencePair& ref, const ConcatenatedDoa& d_n);

/// r_n = r_ref + C (a_n - a_ref) with C = B U_J. Needs a full-set map and a
/// reference carrying PCA coefficients.
Eigen::VectorXd pca_to_room(const AffineMap& map, const PcaModel& model, const ReferencePair& ref,
                            const Eigen::VectorXd& a_n);

/// C = B U_J for a full-set map.
Eigen::MatrixXd pca_room_matrix(const AffineMap& map, const PcaModel& model);

}  // namespace arrayloc
