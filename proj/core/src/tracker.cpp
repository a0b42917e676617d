#include "arrayloc/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/LU>

#include "arrayloc/errors.hpp"

namespace arrayloc {

DoaTracker::DoaTracker(TrackerConfig config) : config_(config) {
  if (config_.process_noise < 0.0 || config_.measurement_noise < 0.0) {
    throw InvalidArgument("tracker noise variances must be non-negative");
  }
}

std::optional<TrackedDoa> DoaTracker::update(const PeakObservation& obs) {
  if (last_timestamp_ms_ && obs.timestamp_ms <= *last_timestamp_ms_) {
    throw InvalidArgument("tracker timestamps must strictly increase");
  }
  last_timestamp_ms_ = obs.timestamp_ms;

  if (state_ && obs.timestamp_ms - last_association_ms_ > config_.lost_ms) state_.reset();

  const DoaPeak* strongest = nullptr;
  for (const DoaPeak& p : obs.peaks) {
    if (p.energy < config_.min_energy || !p.direction.allFinite() || p.direction.norm() == 0.0) continue;
    if (strongest == nullptr || p.energy > strongest->energy) strongest = &p;
  }
  if (strongest == nullptr) {
    if (state_) covariance_ += config_.process_noise * Eigen::Matrix3d::Identity();
    return std::nullopt;
  }

  if (!state_) {
    state_ = DoaVector::normalized(strongest->direction);
    covariance_ = config_.measurement_noise * Eigen::Matrix3d::Identity();
    last_association_ms_ = obs.timestamp_ms;
    return TrackedDoa{obs.timestamp_ms, *state_, strongest->energy};
  }

  // Predict: constant position.
  covariance_ += config_.process_noise * Eigen::Matrix3d::Identity();

  // Associate the closest qualifying peak inside the gate.
  const double gate = deg2rad(config_.gate_deg);
  const DoaPeak* best = nullptr;
  double best_angle = gate;
  for (const DoaPeak& p : obs.peaks) {
    if (p.energy < config_.min_energy || !p.direction.allFinite() || p.direction.norm() == 0.0) continue;
    const double a = angle_between(state_->vec(), p.direction);
    if (a <= best_angle) {
      best_angle = a;
      best = &p;
    }
  }
  if (best == nullptr) return std::nullopt;

  const Vec3 z = best->direction.normalized();
  const Eigen::Matrix3d r = config_.measurement_noise * Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d s = covariance_ + r;
  Eigen::Matrix3d gain;
  if (s.norm() == 0.0) {
    gain.setIdentity();
  } else {
    gain = covariance_ * s.inverse();
  }
  const Vec3 x = state_->vec() + gain * (z - state_->vec());
  covariance_ = (Eigen::Matrix3d::Identity() - gain) * covariance_;
  state_ = DoaVector::normalized(x.norm() > 0.0 ? x : z);
  last_association_ms_ = obs.timestamp_ms;
  return TrackedDoa{obs.timestamp_ms, *state_, best->energy};
}

std::vector<TrackedDoa> kalman_track(std::span<const PeakObservation> stream, const TrackerConfig& config) {
  DoaTracker tracker(config);
  std::vector<TrackedDoa> out;
  for (const PeakObservation& obs : stream) {
    if (auto t = tracker.update(obs)) out.push_back(*t);
  }
  return out;
}

namespace {
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}
}  // namespace

std::vector<TrackedDoa> bin_to_records(std::span<const TrackedDoa> stream, std::int64_t bin_ms,
                                       BinStats* stats) {
  if (bin_ms <= 0) throw InvalidArgument("bin_ms must be positive");
  struct Acc {
    Vec3 sum = Vec3::Zero();
    DoaVector first;
    double energy = 0.0;
    std::size_t count = 0;
  };
  std::map<std::int64_t, Acc> bins;
  for (const TrackedDoa& t : stream) {
    Acc& a = bins[floor_div(t.timestamp_ms, bin_ms)];
    if (a.count == 0) a.first = t.doa;
    a.sum += t.doa.vec();
    a.energy += t.energy;
    ++a.count;
  }
  BinStats local;
  std::vector<TrackedDoa> out;
  out.reserve(bins.size());
  for (const auto& [bin, acc] : bins) {
    const Vec3 mean = acc.sum / static_cast<double>(acc.count);
    if (mean.norm() < 1e-12) {
      ++local.bins_dropped_zero_norm;
      continue;
    }
    // A single sample passes through untouched.
    const DoaVector doa = acc.count == 1 ? acc.first : DoaVector::normalized(mean);
    out.push_back({bin * bin_ms, doa, acc.energy / static_cast<double>(acc.count)});
    ++local.bins_emitted;
  }
  if (stats != nullptr) {
    stats->bins_emitted += local.bins_emitted;
    stats->bins_dropped_zero_norm += local.bins_dropped_zero_norm;
  }
  return out;
}

DoaFrontend::DoaFrontend(const HalfSphereGrid& grid, ArrayGeometry geometry, FrontendConfig config)
    : srp_(grid, std::move(geometry)), config_(config) {}

std::vector<PeakObservation> DoaFrontend::detect(const Eigen::MatrixXd& audio, std::int64_t start_ms) const {
  const double fs = srp_.geometry().sample_rate;
  std::vector<PeakObservation> out;
  for (const MultichannelFrame& frame : frame_audio(audio, config_.frame_length, config_.hop, fs)) {
    const SteeredPowerMap map = srp_.power(stft(frame));
    PeakObservation obs;
    const double offset_ms =
        static_cast<double>(frame.frame_index) * static_cast<double>(config_.hop) * 1000.0 / fs;
    obs.timestamp_ms = start_ms + static_cast<std::int64_t>(std::llround(offset_ms));
    for (const Peak& p : pick_peaks(map, config_.max_peaks, config_.suppression_deg)) {
      obs.peaks.push_back({srp_.grid().points[p.index].vec(), p.power});
    }
    out.push_back(std::move(obs));
  }
  return out;
}

std::vector<TrackedDoa> DoaFrontend::process(const Eigen::MatrixXd& audio, std::int64_t start_ms,
                                             BinStats* stats) const {
  const auto observations = detect(audio, start_ms);
  const auto tracked = kalman_track(observations, config_.tracker);
  return bin_to_records(tracked, config_.bin_ms, stats);
}

}  // namespace arrayloc
