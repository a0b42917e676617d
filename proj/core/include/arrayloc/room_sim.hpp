#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "arrayloc/fusion.hpp"
#include "arrayloc/sphere_grid.hpp"
#include "arrayloc/srp_phat.hpp"

namespace arrayloc {

/// Array placement. `orientation` maps local coordinates to global ones; its
/// columns are the local x, y, z axes expressed in the room frame.
struct ArrayPose {
  Vec3 position = Vec3::Zero();
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();

  /// Pose whose local z axis points along `facing` and local y along `up`
  /// (both in room coordinates; `up` is orthogonalized against `facing`).
  static ArrayPose looking(const Vec3& position, const Vec3& facing, const Vec3& up);
  /// Throws InvalidArgument unless orientation is a proper rotation (1e-9).
  void validate() const;
};

/// Direction from the array to `source` in the array frame, or nullopt if
/// the source lies below the array's half-sphere (local z < 0). Throws
/// InvalidArgument when the source coincides with the array.
std::optional<DoaVector> true_doa(const ArrayPose& pose, const Vec3& source);

struct Trajectory {
  std::string name;
  std::vector<Vec3> waypoints;
  double speed_mps = 0.1;

  double length() const;
  double duration_s() const { return length() / speed_mps; }
};

struct TrajectorySample {
  Vec3 position;
  int leg = 0;  ///< index of the waypoint segment being traversed
};

/// Constant-speed position at time t (clamped to the trajectory ends).
TrajectorySample sample_trajectory(const Trajectory& trajectory, double t_s);

enum class DropoutKind { none, one_of_arrays, independent };

struct DropoutPolicy {
  DropoutKind kind = DropoutKind::none;
  /// one_of_arrays: chance that one uniformly chosen array is dropped.
  /// independent: per-array drop chance.
  double probability = 0.0;
  bool allow_empty = false;
};

struct CalibrationPoint {
  int id = 0;
  Vec3 position = Vec3::Zero();
  std::string group;
};

struct Scenario {
  std::vector<ArrayPose> poses;
  std::vector<CalibrationPoint> calibration_points;
  std::vector<Trajectory> trajectories;
  Vec3 room_min = Vec3::Zero();
  Vec3 room_max = Vec3::Constant(10.0);
  double noise_deg = 2.0;
  bool quantize = false;
  DropoutPolicy dropout;
  std::uint64_t seed = 1;
  std::int64_t start_ms = 0;
  int room_dim = 2;

  std::size_t arrays() const { return poses.size(); }
  const Trajectory& trajectory(std::string_view name) const;
  const CalibrationPoint& point(int id) const;
  std::vector<int> point_ids(std::string_view group = {}) const;
  /// Throws InvalidArgument on an inconsistent scenario.
  void validate() const;
};

struct GroundTruthRecord {
  std::int64_t timestamp_ms = 0;
  Vec3 true_position = Vec3::Zero();
  std::vector<std::optional<DoaVector>> true_doas;
  ConcatenatedDoa emitted;
  int leg = 0;
};

/// Rotates `doa` by an angle ~ Normal(0, sigma) about a uniformly random
/// axis perpendicular to it; a result below the half-sphere is clamped.
DoaVector perturb_direction(const DoaVector& doa, double sigma_rad, std::mt19937_64& rng);

/// Noise, quantization and dropout applied to true DOAs for one scenario.
class DoaSynthesizer {
 public:
  DoaSynthesizer(const Scenario& scenario, std::uint64_t stream_salt);

  /// True and emitted DOAs for a source position. Dropout is skipped when
  /// `with_dropout` is false.
  GroundTruthRecord observe(const Vec3& source, std::int64_t timestamp_ms, bool with_dropout);

 private:
  const Scenario* scenario_;
  std::mt19937_64 rng_;
};

std::vector<GroundTruthRecord> synthesize_doa_stream(const Scenario& scenario, std::string_view trajectory,
                                                     std::int64_t period_ms = 64);

/// floor(dwell_s * 1000 / period_ms) records per calibration point, without
/// dropout. `point_ids` empty means every point in the scenario.
CalibrationSet synthesize_calibration(const Scenario& scenario, double dwell_s = 30.0, std::int64_t period_ms = 64,
                                      std::span<const int> point_ids = {});

/// Five arrays and eleven calibration points approximating the office layout
/// used to demonstrate the method. Positions are plausible, not measured.
Scenario default_paper_scenario();

// ---------------------------------------------------------------------------
// Audio

std::vector<double> white_noise(std::size_t samples, std::uint64_t seed, double stddev = 1.0);

/// Plane wave from `local_direction` (unit, array frame) rendered on every
/// microphone with windowed-sinc fractional delays, plus white noise at
/// `snr_db` relative to each channel's signal power (infinity: no noise).
/// Returns channels x samples.
Eigen::MatrixXd render_plane_wave(const ArrayGeometry& geometry, const Vec3& local_direction,
                                  std::span<const double> signal,
                                  double snr_db = std::numeric_limits<double>::infinity(), std::uint64_t seed = 0);

/// render_plane_wave for the true DOA of `source` seen from `pose`, split
/// into analysis frames. Throws InvalidArgument if the array cannot see the
/// source.
std::vector<MultichannelFrame> synthesize_audio(const ArrayGeometry& geometry, const ArrayPose& pose,
                                                std::span<const double> signal, const Vec3& source, double snr_db,
                                                std::uint64_t seed = 0, std::size_t frame_length = 512,
                                                std::size_t hop = 128);

}  // namespace arrayloc
