#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "arrayloc/sphere_grid.hpp"
#include "arrayloc/srp_phat.hpp"

namespace arrayloc {

struct TrackedDoa {
  std::int64_t timestamp_ms = 0;
  DoaVector doa;
  double energy = 0.0;
};

struct DoaPeak {
  Vec3 direction;
  double energy = 0.0;
};

/// Candidate directions produced for one analysis hop.
struct PeakObservation {
  std::int64_t timestamp_ms = 0;
  std::vector<DoaPeak> peaks;
};

struct TrackerConfig {
  double process_noise = 1e-4;      ///< per-step variance added to each component
  double measurement_noise = 2e-3;  ///< variance of each measured component
  double gate_deg = 20.0;
  std::int64_t lost_ms = 500;
  /// Peaks weaker than this are ignored. Default is 0.15 per microphone pair.
  double min_energy = 0.15 * 28.0;
};

/// Single-source constant-position Kalman filter on the Cartesian DOA
/// components. The state is renormalized (and z clamped to >= 0) after every
/// update. A hop with no gated peak only inflates the covariance and emits
/// nothing. After `lost_ms` without an association the track is dropped and
/// the next qualifying hop re-seeds from its strongest peak.
class DoaTracker {
 public:
  explicit DoaTracker(TrackerConfig config = {});

  /// Throws InvalidArgument if timestamps do not strictly increase.
  std::optional<TrackedDoa> update(const PeakObservation& obs);

  bool has_track() const { return state_.has_value(); }
  /// Current estimate (the held value while coasting).
  std::optional<DoaVector> state() const { return state_; }
  const TrackerConfig& config() const { return config_; }

 private:
  TrackerConfig config_;
  std::optional<DoaVector> state_;
  Eigen::Matrix3d covariance_ = Eigen::Matrix3d::Identity();
  std::int64_t last_association_ms_ = 0;
  std::optional<std::int64_t> last_timestamp_ms_;
};

std::vector<TrackedDoa> kalman_track(std::span<const PeakObservation> stream,
                                     const TrackerConfig& config = {});

struct BinStats {
  std::size_t bins_emitted = 0;
  std::size_t bins_dropped_zero_norm = 0;
};

/// Component-wise mean of all DOAs per `bin_ms` window (bins aligned to
/// multiples of bin_ms), renormalized. The record carries the bin start and
/// the mean energy. Bins whose mean has zero norm are dropped and counted.
std::vector<TrackedDoa> bin_to_records(std::span<const TrackedDoa> stream, std::int64_t bin_ms = 64,
                                       BinStats* stats = nullptr);

struct FrontendConfig {
  std::size_t frame_length = 512;
  std::size_t hop = 128;
  std::size_t max_peaks = 4;
  double suppression_deg = 10.0;
  std::int64_t bin_ms = 64;
  TrackerConfig tracker;
};

/// Per-array pipeline: STFT -> SRP-PHAT -> peaks -> tracker -> 64 ms bins.
/// One instance per array; instances share only the read-only grid.
class DoaFrontend {
 public:
  DoaFrontend(const HalfSphereGrid& grid, ArrayGeometry geometry, FrontendConfig config = {});

  /// Hop-rate peak candidates for a block of audio (channels x samples)
  /// whose first sample is at `start_ms`.
  std::vector<PeakObservation> detect(const Eigen::MatrixXd& audio, std::int64_t start_ms) const;

  /// Full pipeline returning binned records. The tracker is reset per call.
  std::vector<TrackedDoa> process(const Eigen::MatrixXd& audio, std::int64_t start_ms,
                                  BinStats* stats = nullptr) const;

  const FrontendConfig& config() const { return config_; }

 private:
  SrpPhat srp_;
  FrontendConfig config_;
};

}  // namespace arrayloc
