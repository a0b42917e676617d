#include "arrayloc/room_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Geometry>

#include "arrayloc/errors.hpp"

namespace arrayloc {

ArrayPose ArrayPose::looking(const Vec3& position, const Vec3& facing, const Vec3& up) {
  const Vec3 z = facing.normalized();
  const Vec3 y = (up - up.dot(z) * z).normalized();
  const Vec3 x = y.cross(z);
  ArrayPose pose;
  pose.position = position;
  pose.orientation.col(0) = x;
  pose.orientation.col(1) = y;
  pose.orientation.col(2) = z;
  pose.validate();
  return pose;
}

void ArrayPose::validate() const {
  const Eigen::Matrix3d gram = orientation.transpose() * orientation;
  if (!position.allFinite() || !gram.isIdentity(1e-9) || std::abs(orientation.determinant() - 1.0) > 1e-9) {
    throw InvalidArgument("array orientation must be a proper rotation matrix");
  }
}

std::optional<DoaVector> true_doa(const ArrayPose& pose, const Vec3& source) {
  const Vec3 offset = source - pose.position;
  const double dist = offset.norm();
  if (dist < 1e-12) throw InvalidArgument("source coincides with the array position");
  const Vec3 local = pose.orientation.transpose() * (offset / dist);
  if (local.z() < 0.0) return std::nullopt;
  return DoaVector::normalized(local);
}

double Trajectory::length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) len += (waypoints[i] - waypoints[i - 1]).norm();
  return len;
}

TrajectorySample sample_trajectory(const Trajectory& trajectory, double t_s) {
  if (trajectory.waypoints.empty()) throw InvalidArgument("trajectory has no waypoints");
  if (trajectory.waypoints.size() == 1) return {trajectory.waypoints.front(), 0};
  double remaining = std::max(0.0, t_s) * trajectory.speed_mps;
  for (std::size_t i = 1; i < trajectory.waypoints.size(); ++i) {
    const Vec3& a = trajectory.waypoints[i - 1];
    const Vec3& b = trajectory.waypoints[i];
    const double seg = (b - a).norm();
    if (remaining <= seg || i + 1 == trajectory.waypoints.size()) {
      const double f = seg > 0.0 ? std::min(1.0, remaining / seg) : 1.0;
      return {a + f * (b - a), static_cast<int>(i - 1)};
    }
    remaining -= seg;
  }
  return {trajectory.waypoints.back(), static_cast<int>(trajectory.waypoints.size() - 2)};
}

const Trajectory& Scenario::trajectory(std::string_view name) const {
  for (const auto& t : trajectories)
    if (t.name == name) return t;
  throw InvalidArgument("scenario has no trajectory named '" + std::string(name) + "'");
}

const CalibrationPoint& Scenario::point(int id) const {
  for (const auto& p : calibration_points)
    if (p.id == id) return p;
  throw InvalidArgument("scenario has no calibration point " + std::to_string(id));
}

std::vector<int> Scenario::point_ids(std::string_view group) const {
  std::vector<int> ids;
  for (const auto& p : calibration_points)
    if (group.empty() || p.group == group) ids.push_back(p.id);
  return ids;
}

void Scenario::validate() const {
  if (poses.empty() || poses.size() > kMaxArrays) throw InvalidArgument("scenario needs 1..32 arrays");
  if (calibration_points.empty()) throw InvalidArgument("scenario needs at least one calibration point");
  if (room_dim != 2 && room_dim != 3) throw InvalidArgument("room dimension must be 2 or 3");
  if (noise_deg < 0.0) throw InvalidArgument("noise must be non-negative");
  if (dropout.probability < 0.0 || dropout.probability > 1.0) {
    throw InvalidArgument("dropout probability must be in [0, 1]");
  }
  for (const auto& p : poses) p.validate();
  auto inside = [&](const Vec3& v) {
    return (v.array() >= room_min.array() - 1e-9).all() && (v.array() <= room_max.array() + 1e-9).all();
  };
  for (const auto& p : calibration_points) {
    if (!inside(p.position)) throw InvalidArgument("calibration point " + std::to_string(p.id) + " is outside the room");
  }
  for (const auto& t : trajectories) {
    if (t.waypoints.empty() || !(t.speed_mps > 0.0)) {
      throw InvalidArgument("trajectory '" + t.name + "' needs waypoints and a positive speed");
    }
    for (const auto& w : t.waypoints)
      if (!inside(w)) throw InvalidArgument("trajectory '" + t.name + "' leaves the room");
  }
}

DoaVector perturb_direction(const DoaVector& doa, double sigma_rad, std::mt19937_64& rng) {
  if (sigma_rad <= 0.0) return doa;
  std::normal_distribution<double> angle_dist(0.0, sigma_rad);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * M_PI);
  const double angle = angle_dist(rng);
  const double phase = phase_dist(rng);
  const Vec3& d = doa.vec();
  // Orthonormal tangent basis at d.
  const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = d.cross(helper).normalized();
  const Vec3 e2 = d.cross(e1);
  const Vec3 axis = std::cos(phase) * e1 + std::sin(phase) * e2;
  const Vec3 rotated = d * std::cos(angle) + axis.cross(d) * std::sin(angle);
  return DoaVector::normalized(rotated);
}

DoaSynthesizer::DoaSynthesizer(const Scenario& scenario, std::uint64_t stream_salt) : scenario_(&scenario) {
  std::seed_seq seq{static_cast<std::uint32_t>(scenario.seed), static_cast<std::uint32_t>(scenario.seed >> 32),
                    static_cast<std::uint32_t>(stream_salt), static_cast<std::uint32_t>(stream_salt >> 32)};
  rng_.seed(seq);
}

GroundTruthRecord DoaSynthesizer::observe(const Vec3& source, std::int64_t timestamp_ms, bool with_dropout) {
  const Scenario& scn = *scenario_;
  const std::size_t m_count = scn.arrays();
  const double sigma = deg2rad(scn.noise_deg);

  GroundTruthRecord rec;
  rec.timestamp_ms = timestamp_ms;
  rec.true_position = source;
  rec.true_doas.reserve(m_count);
  std::vector<std::optional<DoaVector>> emitted(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    rec.true_doas.push_back(true_doa(scn.poses[m], source));
    if (!rec.true_doas[m]) continue;
    DoaVector d = perturb_direction(*rec.true_doas[m], sigma, rng_);
    if (scn.quantize) {
      const HalfSphereGrid& grid = default_grid();
      d = grid.points[grid.nearest(d.vec())];
    }
    emitted[m] = d;
  }

  if (with_dropout && scn.dropout.kind != DropoutKind::none) {
    std::vector<bool> drop(m_count, false);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (scn.dropout.kind == DropoutKind::one_of_arrays) {
      if (u(rng_) < scn.dropout.probability) {
        std::uniform_int_distribution<std::size_t> pick(0, m_count - 1);
        drop[pick(rng_)] = true;
      }
    } else {
      for (std::size_t m = 0; m < m_count; ++m) drop[m] = u(rng_) < scn.dropout.probability;
    }
    std::size_t survivors = 0;
    for (std::size_t m = 0; m < m_count; ++m)
      if (emitted[m] && !drop[m]) ++survivors;
    const bool any_visible = std::any_of(emitted.begin(), emitted.end(), [](const auto& e) { return e.has_value(); });
    if (survivors > 0 || scn.dropout.allow_empty || !any_visible) {
      for (std::size_t m = 0; m < m_count; ++m)
        if (drop[m]) emitted[m].reset();
    }
  }
  rec.emitted = concat_doas(emitted, timestamp_ms);
  return rec;
}

namespace {
std::uint64_t salt_for(std::string_view name) {
  // FNV-1a; stable across platforms unlike std::hash.
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}
}  // namespace

std::vector<GroundTruthRecord> synthesize_doa_stream(const Scenario& scenario, std::string_view trajectory,
                                                     std::int64_t period_ms) {
  if (period_ms <= 0) throw InvalidArgument("period must be positive");
  scenario.validate();
  const Trajectory& traj = scenario.trajectory(trajectory);
  DoaSynthesizer synth(scenario, salt_for(trajectory));
  const double duration = traj.duration_s();
  std::vector<GroundTruthRecord> out;
  for (std::int64_t i = 0;; ++i) {
    const double t = static_cast<double>(i * period_ms) / 1000.0;
    if (t > duration + 1e-9) break;
    const TrajectorySample s = sample_trajectory(traj, t);
    GroundTruthRecord rec = synth.observe(s.position, scenario.start_ms + i * period_ms, true);
    rec.leg = s.leg;
    out.push_back(std::move(rec));
  }
  return out;
}

CalibrationSet synthesize_calibration(const Scenario& scenario, double dwell_s, std::int64_t period_ms,
                                      std::span<const int> point_ids) {
  if (period_ms <= 0 || dwell_s <= 0.0) throw InvalidArgument("dwell and period must be positive");
  scenario.validate();
  std::vector<int> ids(point_ids.begin(), point_ids.end());
  if (ids.empty()) ids = scenario.point_ids();
  const auto per_point = static_cast<std::int64_t>(std::floor(dwell_s * 1000.0 / static_cast<double>(period_ms)));
  if (per_point < 1) throw InvalidArgument("dwell shorter than one period");

  DoaSynthesizer synth(scenario, salt_for("calibration"));
  CalibrationBuilder builder(scenario.arrays(), scenario.room_dim);
  std::int64_t t = scenario.start_ms;
  for (int id : ids) {
    const CalibrationPoint& pt = scenario.point(id);
    std::vector<ConcatenatedDoa> obs;
    obs.reserve(static_cast<std::size_t>(per_point));
    for (std::int64_t i = 0; i < per_point; ++i, t += period_ms) {
      obs.push_back(synth.observe(pt.position, t, false).emitted);
    }
    builder.add_point(id, pt.position.head(scenario.room_dim), obs);
  }
  return builder.build();
}

Scenario default_paper_scenario() {
  Scenario s;
  s.room_min = Vec3(0.0, 0.0, 0.0);
  s.room_max = Vec3(5.0, 6.0, 2.7);
  const Vec3 north(0.0, 1.0, 0.0), east(1.0, 0.0, 0.0), up(0.0, 0.0, 1.0), down(0.0, 0.0, -1.0);
  // array-0: south wall, facing north, local y up.
  s.poses.push_back(ArrayPose::looking({2.4, 0.0, 1.6}, north, up));
  // array-1: west wall, facing east, local y up.
  s.poses.push_back(ArrayPose::looking({0.0, 3.2, 1.6}, east, up));
  // array-2..4: ceiling lamps facing down, local y north.
  s.poses.push_back(ArrayPose::looking({1.6, 2.2, 2.6}, down, north));
  s.poses.push_back(ArrayPose::looking({3.4, 2.6, 2.6}, down, north));
  s.poses.push_back(ArrayPose::looking({2.4, 4.1, 2.6}, down, north));

  constexpr double kTable = 0.78;
  constexpr double kChair = 0.50;
  // Table rectangle 1.37 m (east-west) x 0.76 m (north-south).
  const double cx = 2.4, cy = 2.7, half_long = 1.37 / 2.0, half_short = 0.76 / 2.0;
  s.calibration_points = {
      {1, {cx - half_long, cy - half_short, kTable}, "table"},
      {2, {cx + half_long, cy - half_short, kTable}, "table"},
      {3, {cx + half_long, cy + half_short, kTable}, "table"},
      {4, {cx - half_long, cy + half_short, kTable}, "table"},
      {5, {1.7, 1.5, kTable}, "table"},
      {6, {3.1, 1.5, kTable}, "table"},
      {7, {1.3, 2.0, kChair}, "chair"},
      {8, {3.6, 2.0, kChair}, "chair"},
      {9, {3.7, 3.3, kChair}, "chair"},
      {10, {2.4, 3.6, kChair}, "chair"},
      {11, {1.2, 3.4, kChair}, "chair"},
  };
  const auto& p = s.calibration_points;
  s.trajectories.push_back(
      {"rectangle-1234", {p[0].position, p[1].position, p[2].position, p[3].position, p[0].position}, 0.1});
  s.trajectories.push_back({"line-56", {p[4].position, p[5].position}, 0.1});
  s.noise_deg = 2.0;
  s.quantize = true;
  s.seed = 2022;
  s.room_dim = 2;
  return s;
}

// ---------------------------------------------------------------------------
// Audio

std::vector<double> white_noise(std::size_t samples, std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> out(samples);
  for (double& v : out) v = dist(rng);
  return out;
}

namespace {

constexpr int kSincHalfWidth = 32;

// Blackman-windowed sinc evaluated at offset x (samples), support |x| < W.
double windowed_sinc(double x) {
  const double w = static_cast<double>(kSincHalfWidth);
  if (std::abs(x) >= w) return 0.0;
  const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
  const double t = (x + w) / (2.0 * w);
  const double window = 0.42 - 0.5 * std::cos(2.0 * M_PI * t) + 0.08 * std::cos(4.0 * M_PI * t);
  return sinc * window;
}

}  // namespace

Eigen::MatrixXd render_plane_wave(const ArrayGeometry& geometry, const Vec3& local_direction,
                                  std::span<const double> signal, double snr_db, std::uint64_t seed) {
  if (std::abs(local_direction.norm() - 1.0) > 1e-9) throw InvalidArgument("plane-wave direction must be unit norm");
  const auto n = static_cast<Eigen::Index>(signal.size());
  const auto channels = static_cast<Eigen::Index>(geometry.mic_count());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(channels, n);
  const double scale = geometry.sample_rate / geometry.speed_of_sound;
  for (Eigen::Index c = 0; c < channels; ++c) {
    // Mic c hears the wave this many samples later than the array centre.
    const double delay = -scale * geometry.mic_positions[static_cast<std::size_t>(c)].dot(local_direction);
    const auto shift = static_cast<Eigen::Index>(std::floor(delay));
    const double frac = delay - static_cast<double>(shift);
    if (frac < 1e-12) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index src = i - shift;
        if (src >= 0 && src < n) out(c, i) = signal[static_cast<std::size_t>(src)];
      }
      continue;
    }
    std::vector<double> taps;
    for (int k = -kSincHalfWidth; k <= kSincHalfWidth; ++k) taps.push_back(windowed_sinc(static_cast<double>(k) - frac));
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0.0;
      // out[i] = s(i - delay) = sum_j s[j] h(i - delay - j), j = i - shift - k.
      for (int k = -kSincHalfWidth; k <= kSincHalfWidth; ++k) {
        const Eigen::Index src = i - shift - k;
        if (src < 0 || src >= n) continue;
        acc += signal[static_cast<std::size_t>(src)] * taps[static_cast<std::size_t>(k + kSincHalfWidth)];
      }
      out(c, i) = acc;
    }
  }
  if (std::isfinite(snr_db)) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index c = 0; c < channels; ++c) {
      const double power = out.row(c).squaredNorm() / static_cast<double>(std::max<Eigen::Index>(n, 1));
      const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
      for (Eigen::Index i = 0; i < n; ++i) out(c, i) += sigma * dist(rng);
    }
  }
  return out;
}

std::vector<MultichannelFrame> synthesize_audio(const ArrayGeometry& geometry, const ArrayPose& pose,
                                                std::span<const double> signal, const Vec3& source, double snr_db,
                                                std::uint64_t seed, std::size_t frame_length, std::size_t hop) {
  const auto doa = true_doa(pose, source);
  if (!doa) throw InvalidArgument("source is behind the array half-sphere");
  const Eigen::MatrixXd audio = render_plane_wave(geometry, doa->vec(), signal, snr_db, seed);
  return frame_audio(audio, frame_length, hop, geometry.sample_rate);
}

}  // namespace arrayloc
