#include "arrayloc/fusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <sstream>

#include <Eigen/SVD>

#include "arrayloc/errors.hpp"

namespace arrayloc {

ActiveMask full_mask(std::size_t arrays) {
  if (arrays > kMaxArrays) throw InvalidArgument("at most 32 arrays are supported");
  return arrays == kMaxArrays ? ~ActiveMask{0} : ((ActiveMask{1} << arrays) - 1);
}

std::size_t popcount(ActiveMask mask) { return static_cast<std::size_t>(std::popcount(mask)); }

ActiveMask ConcatenatedDoa::mask() const {
  ActiveMask m = 0;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (active[i]) m |= ActiveMask{1} << i;
  return m;
}

std::size_t ConcatenatedDoa::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

void ConcatenatedDoa::validate() const {
  if (values.size() != 3 * static_cast<Eigen::Index>(active.size())) {
    throw DataError("DOA vector length does not match its array count");
  }
  for (std::size_t m = 0; m < active.size(); ++m) {
    const Vec3 v = subvector(m);
    if (active[m]) {
      if (std::abs(v.norm() - 1.0) > 1e-6 || v.z() < -1e-6) {
        throw DataError("active DOA subvector " + std::to_string(m) + " is not a unit half-sphere vector");
      }
    } else if (!v.isZero(0.0)) {
      throw DataError("inactive DOA subvector " + std::to_string(m) + " is not zero");
    }
  }
}

ConcatenatedDoa concat_doas(std::span<const std::optional<DoaVector>> per_array, std::int64_t timestamp_ms) {
  if (per_array.empty()) throw InvalidArgument("concat_doas needs at least one array");
  if (per_array.size() > kMaxArrays) throw InvalidArgument("at most 32 arrays are supported");
  ConcatenatedDoa d;
  d.timestamp_ms = timestamp_ms;
  d.values = Eigen::VectorXd::Zero(3 * static_cast<Eigen::Index>(per_array.size()));
  d.active.assign(per_array.size(), false);
  for (std::size_t m = 0; m < per_array.size(); ++m) {
    if (!per_array[m]) continue;
    d.values.segment<3>(3 * static_cast<Eigen::Index>(m)) = per_array[m]->vec();
    d.active[m] = true;
  }
  return d;
}

std::vector<Eigen::Index> active_rows(ActiveMask mask, std::size_t arrays) {
  std::vector<Eigen::Index> rows;
  for (std::size_t m = 0; m < arrays; ++m) {
    if ((mask >> m) & 1U) {
      for (Eigen::Index c = 0; c < 3; ++c) rows.push_back(3 * static_cast<Eigen::Index>(m) + c);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Calibration sets

void CalibrationSet::validate() const {
  if (arrays == 0 || doas.rows() != 3 * static_cast<Eigen::Index>(arrays)) {
    throw DataError("calibration DOA matrix must have 3M rows");
  }
  if (locations.cols() != doas.cols()) throw DataError("calibration DOA and location column counts differ");
  if (room_dim() != 2 && room_dim() != 3) throw DataError("room dimension must be 2 or 3");
  if (!timestamps_ms.empty() && static_cast<Eigen::Index>(timestamps_ms.size()) != doas.cols()) {
    throw DataError("calibration timestamps do not match the column count");
  }
  Eigen::Index expected = 0;
  for (const CalibrationSegment& s : segments) {
    if (s.begin != expected || s.end <= s.begin) throw DataError("calibration segments must tile the columns");
    for (Eigen::Index c = s.begin + 1; c < s.end; ++c) {
      if (locations.col(c) != locations.col(s.begin)) {
        throw DataError("calibration point " + std::to_string(s.point_id) + " has varying locations");
      }
    }
    expected = s.end;
  }
  if (expected != doas.cols()) throw DataError("calibration segments must tile the columns");
}

std::vector<int> CalibrationSet::point_ids() const {
  std::vector<int> ids;
  for (const auto& s : segments) ids.push_back(s.point_id);
  return ids;
}

CalibrationSet CalibrationSet::subset(std::span<const int> point_ids) const {
  CalibrationSet out;
  out.arrays = arrays;
  Eigen::Index cols = 0;
  std::vector<const CalibrationSegment*> picked;
  for (const auto& s : segments) {
    if (std::find(point_ids.begin(), point_ids.end(), s.point_id) != point_ids.end()) {
      picked.push_back(&s);
      cols += s.size();
    }
  }
  out.doas.resize(doas.rows(), cols);
  out.locations.resize(locations.rows(), cols);
  Eigen::Index at = 0;
  for (const CalibrationSegment* s : picked) {
    out.doas.middleCols(at, s->size()) = doas.middleCols(s->begin, s->size());
    out.locations.middleCols(at, s->size()) = locations.middleCols(s->begin, s->size());
    if (!timestamps_ms.empty()) {
      out.timestamps_ms.insert(out.timestamps_ms.end(), timestamps_ms.begin() + s->begin,
                               timestamps_ms.begin() + s->end);
    }
    out.segments.push_back({s->point_id, at, at + s->size()});
    at += s->size();
  }
  return out;
}

CalibrationBuilder::CalibrationBuilder(std::size_t arrays, int room_dim) : arrays_(arrays), room_dim_(room_dim) {
  if (arrays == 0 || arrays > kMaxArrays) throw InvalidArgument("array count must be in [1, 32]");
  if (room_dim != 2 && room_dim != 3) throw InvalidArgument("room dimension must be 2 or 3");
}

void CalibrationBuilder::add_point(int point_id, const Eigen::VectorXd& location,
                                   std::span<const ConcatenatedDoa> observations) {
  if (location.size() != room_dim_) throw InvalidArgument("calibration location has the wrong dimension");
  if (observations.empty()) throw InvalidArgument("calibration point needs at least one observation");
  for (const auto& d : observations) {
    if (d.arrays() != arrays_) throw InvalidArgument("calibration observation has the wrong array count");
  }
  points_.emplace_back(point_id, location);
  blocks_.emplace_back(observations.begin(), observations.end());
}

CalibrationSet CalibrationBuilder::build() const {
  CalibrationSet cal;
  cal.arrays = arrays_;
  Eigen::Index cols = 0;
  for (const auto& b : blocks_) cols += static_cast<Eigen::Index>(b.size());
  cal.doas.resize(3 * static_cast<Eigen::Index>(arrays_), cols);
  cal.locations.resize(room_dim_, cols);
  cal.timestamps_ms.reserve(static_cast<std::size_t>(cols));
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Eigen::Index begin = at;
    for (const ConcatenatedDoa& d : blocks_[i]) {
      cal.doas.col(at) = d.values;
      cal.locations.col(at) = points_[i].second;
      cal.timestamps_ms.push_back(d.timestamp_ms);
      ++at;
    }
    cal.segments.push_back({points_[i].first, begin, at});
  }
  return cal;
}

// ---------------------------------------------------------------------------
// Affine calibration

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a, double rel_tol, Eigen::Index* rank) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rel_tol * s(0) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) {
      inv(i) = 1.0 / s(i);
      ++r;
    }
  }
  if (rank != nullptr) *rank = r;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

namespace {

std::size_t count_distinct_points(const CalibrationSet& cal, Eigen::MatrixXd* distinct_out) {
  std::vector<Eigen::VectorXd> distinct;
  auto consider = [&](const Eigen::VectorXd& r) {
    for (const auto& e : distinct)
      if (e == r) return;
    distinct.push_back(r);
  };
  if (cal.segments.empty()) {
    for (Eigen::Index c = 0; c < cal.locations.cols(); ++c) consider(cal.locations.col(c));
  } else {
    for (const auto& s : cal.segments) consider(cal.locations.col(s.begin));
  }
  if (distinct_out != nullptr) {
    distinct_out->resize(cal.locations.rows(), static_cast<Eigen::Index>(distinct.size()));
    for (std::size_t i = 0; i < distinct.size(); ++i) distinct_out->col(static_cast<Eigen::Index>(i)) = distinct[i];
  }
  return distinct.size();
}

Eigen::Index affine_span(const Eigen::MatrixXd& points) {
  if (points.cols() < 2) return 0;
  const Eigen::VectorXd mean = points.rowwise().mean();
  const Eigen::MatrixXd centered = points.colwise() - mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const Eigen::VectorXd& s = svd.singularValues();
  const double scale = std::max(1.0, points.cwiseAbs().maxCoeff());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 1e-9 * scale) ++r;
  return r;
}

void check_active(ActiveMask active, std::size_t arrays) {
  if (active == 0) throw InvalidArgument("active set is empty");
  if ((active & ~full_mask(arrays)) != 0) throw InvalidArgument("active set names arrays beyond M");
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

void require_arrays(const ConcatenatedDoa& d, ActiveMask needed, std::size_t arrays, const char* what) {
  if (d.arrays() != arrays || static_cast<std::size_t>(d.values.size()) != 3 * arrays) {
    throw ActiveSetMismatch(std::string(what) + ": observation has the wrong array count");
  }
  if ((d.mask() & needed) != needed) {
    throw ActiveSetMismatch(std::string(what) + ": observation is missing arrays required by the map");
  }
}

}  // namespace

AffineMap fit_affine(const CalibrationSet& cal, ActiveMask active) {
  cal.validate();
  check_active(active, cal.arrays);

  AffineMap map;
  map.active = active;
  map.arrays = cal.arrays;
  FitReport& report = map.report;

  Eigen::MatrixXd distinct;
  report.distinct_points = count_distinct_points(cal, &distinct);
  if (report.distinct_points < 2) {
    throw InvalidArgument("affine calibration needs at least 2 distinct calibration points, got " +
                          std::to_string(report.distinct_points));
  }

  const std::vector<Eigen::Index> rows = active_rows(active, cal.arrays);
  const Eigen::MatrixXd d = cal.doas(rows, Eigen::all);
  for (Eigen::Index c = 0; c < d.cols(); ++c) {
    for (Eigen::Index a = 0; a < d.rows(); a += 3) {
      if (d.col(c).segment<3>(a).isZero(0.0)) {
        throw InvalidArgument("calibration column " + std::to_string(c) + " lacks an array in the active set");
      }
    }
  }
  const Eigen::MatrixXd& r = cal.locations;

  const Eigen::VectorXd d_mean = d.rowwise().mean();
  const Eigen::VectorXd r_mean = r.rowwise().mean();
  const Eigen::MatrixXd normal = (d.colwise() - d_mean) * d.transpose();
  const Eigen::MatrixXd rhs = (r.colwise() - r_mean) * d.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(normal);
  report.normal_matrix_singular_values = svd.singularValues();
  const Eigen::MatrixXd normal_pinv = pseudo_inverse(normal, 1e-10, &report.normal_matrix_rank);

  map.coeffs = rhs * normal_pinv;
  map.offset = r_mean - map.coeffs * d_mean;

  const int n = cal.room_dim();
  report.location_span = affine_span(distinct);
  report.rank_deficient = report.normal_matrix_rank < normal.rows();
  report.line_degenerate = report.location_span < n;
  if (report.distinct_points < static_cast<std::size_t>(n) + 1) {
    report.warnings.push_back("fewer than N+1 = " + std::to_string(n + 1) +
                              " calibration points; the map cannot span the room");
  }
  if (report.line_degenerate) {
    std::ostringstream os;
    os << "calibration locations span " << report.location_span << " of " << n
       << " room dimensions; mapped outputs are confined to that "
       << (report.location_span == 1 ? "line" : "subspace");
    report.warnings.push_back(os.str());
  }
  if (report.rank_deficient) {
    report.warnings.push_back("DOA normal matrix has rank " + std::to_string(report.normal_matrix_rank) + " of " +
                              std::to_string(normal.rows()) + "; pseudo-inverse used");
  }
  return map;
}

Eigen::VectorXd map_affine(const AffineMap& map, const ConcatenatedDoa& d) {
  require_arrays(d, map.active, map.arrays, "map_affine");
  return map.offset + map.coeffs * gather(d.values, active_rows(map.active, map.arrays));
}

std::shared_ptr<const AffineMap> AffineMapCache::get(const CalibrationSet& cal, ActiveMask active) {
  {
    std::shared_lock lock(mutex_);
    auto it = maps_.find(active);
    if (it != maps_.end()) return it->second;
  }
  auto fitted = std::make_shared<AffineMap>(fit_affine(cal, active));
  const ActiveMask full = full_mask(cal.arrays);
  if (reuse_full_offset_ && active != full) fitted->offset = get(cal, full)->offset;

  std::unique_lock lock(mutex_);
  return maps_.try_emplace(active, std::move(fitted)).first->second;
}

std::size_t AffineMapCache::size() const {
  std::shared_lock lock(mutex_);
  return maps_.size();
}

Eigen::VectorXd map_with_missing(const CalibrationSet& cal, const ConcatenatedDoa& d, AffineMapCache& cache) {
  if (d.arrays() != cal.arrays) throw ActiveSetMismatch("map_with_missing: observation has the wrong array count");
  const ActiveMask mask = d.mask();
  if (mask == 0) throw NoObservation("map_with_missing: no active arrays in observation");
  return map_affine(*cache.get(cal, mask), d);
}

// ---------------------------------------------------------------------------
// PCA

PcaModel fit_pca(const Eigen::MatrixXd& doas, Eigen::Index components, double rel_tol) {
  if (components < 1) throw InvalidArgument("PCA needs at least one component");
  if (doas.cols() < components) throw InvalidArgument("PCA needs at least J observations");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(doas, Eigen::ComputeThinU);
  PcaModel model;
  model.singular_values = svd.singularValues();
  const double cutoff = model.singular_values.size() > 0 ? rel_tol * model.singular_values(0) : 0.0;
  for (Eigen::Index i = 0; i < model.singular_values.size(); ++i)
    if (model.singular_values(i) > cutoff && model.singular_values(i) > 0.0) ++model.rank;
  if (components > model.rank) {
    throw InvalidArgument("PCA: J = " + std::to_string(components) + " exceeds the DOA matrix rank " +
                          std::to_string(model.rank));
  }
  model.basis = svd.matrixU().leftCols(components);
  for (Eigen::Index j = 0; j < components; ++j) {
    Eigen::Index at = 0;
    model.basis.col(j).cwiseAbs().maxCoeff(&at);
    if (model.basis(at, j) < 0.0) model.basis.col(j) *= -1.0;
  }
  return model;
}

PcaModel fit_pca(const CalibrationSet& cal, Eigen::Index components, double rel_tol) {
  cal.validate();
  for (Eigen::Index c = 0; c < cal.doas.cols(); ++c) {
    for (Eigen::Index a = 0; a < cal.doas.rows(); a += 3) {
      if (cal.doas.col(c).segment<3>(a).isZero(0.0)) {
        throw InvalidArgument("PCA calibration requires every array active in every column");
      }
    }
  }
  return fit_pca(cal.doas, components, rel_tol);
}

PcaProjection project_pca(const PcaModel& model, const ConcatenatedDoa& d) {
  if (d.values.size() != model.basis.rows()) throw InvalidArgument("DOA length does not match the PCA model");
  return {model.basis.transpose() * d.values, d.active_count() != d.arrays()};
}

std::vector<double> pca_proximity(const PcaModel& model, const CalibrationSet& cal, const Eigen::VectorXd& a) {
  if (a.size() != model.components()) throw InvalidArgument("PCA coefficient length does not match the model");
  std::vector<double> out;
  for (const auto& s : cal.segments) {
    const Eigen::VectorXd mean = cal.doas.middleCols(s.begin, s.size()).rowwise().mean();
    out.push_back((model.basis.transpose() * mean - a).norm());
  }
  return out;
}

ReferencePair ReferencePair::make(ConcatenatedDoa doa, Eigen::VectorXd location, const PcaModel* model) {
  ReferencePair ref{std::move(doa), std::move(location), std::nullopt};
  if (model != nullptr) ref.coefficients = project_pca(*model, ref.doa).coefficients;
  return ref;
}

Eigen::VectorXd map_from_reference(const AffineMap& map, const ReferencePair& ref, const ConcatenatedDoa& d_n) {
  require_arrays(ref.doa, map.active, map.arrays, "map_from_reference (reference)");
  require_arrays(d_n, map.active, map.arrays, "map_from_reference");
  if (ref.location.size() != map.room_dim()) throw InvalidArgument("reference location has the wrong dimension");
  const auto rows = active_rows(map.active, map.arrays);
  return ref.location + map.coeffs * (gather(d_n.values, rows) - gather(ref.doa.values, rows));
}

Eigen::MatrixXd pca_room_matrix(const AffineMap& map, const PcaModel& model) {
  if (map.active != full_mask(map.arrays)) throw InvalidArgument("PCA-to-room mapping needs a map over all arrays");
  if (model.basis.rows() != map.coeffs.cols()) throw InvalidArgument("PCA model and affine map dimensions differ");
  return map.coeffs * model.basis;
}

Eigen::VectorXd pca_to_room(const AffineMap& map, const PcaModel& model, const ReferencePair& ref,
                            const Eigen::VectorXd& a_n) {
  if (!ref.coefficients) throw InvalidArgument("reference pair has no PCA coefficients");
  if (ref.coefficients->size() != model.components() || a_n.size() != model.components()) {
    throw InvalidArgument("PCA coefficient length does not match the model");
  }
  if (ref.location.size() != map.room_dim()) throw InvalidArgument("reference location has the wrong dimension");
  return ref.location + pca_room_matrix(map, model) * (a_n - *ref.coefficients);
}

}  // namespace arrayloc
