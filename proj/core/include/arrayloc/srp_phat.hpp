#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "arrayloc/sphere_grid.hpp"

namespace arrayloc {

/// One analysis frame: rows are channels, columns are samples.
struct MultichannelFrame {
  Eigen::MatrixXd samples;
  std::int64_t frame_index = 0;
  double sample_rate = 16000.0;

  std::size_t channels() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t length() const { return static_cast<std::size_t>(samples.cols()); }
};

/// One-sided spectra: rows are channels, columns are bins 0..N/2.
struct ChannelSpectra {
  Eigen::MatrixXcd bins;
  std::size_t frame_length = 0;
};

/// Hann-windowed (periodic) N-point FFT per channel. N must be a power of two.
ChannelSpectra stft(const MultichannelFrame& frame);

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Split `audio` (channels x samples) into frames of `frame_length` samples
/// every `hop` samples. Trailing samples that do not fill a frame are dropped.
std::vector<MultichannelFrame> frame_audio(const Eigen::MatrixXd& audio, std::size_t frame_length,
                                           std::size_t hop, double sample_rate);

struct SteeredPowerMap {
  std::vector<double> powers;
  const HalfSphereGrid* grid = nullptr;

  std::size_t argmax() const;
};

/// Steered response power with phase transform over a fixed grid.
///
/// For grid point i the power is
///   E_i = sum_{p<q} (1/N) sum_k Re{ G_pq[k] exp(-j 2 pi tau_i,pq k / N) }
/// where G_pq = X_p X_q* / (|X_p||X_q|) and tau comes from tdoa_for_doa().
/// The inner sum runs over the full symmetric band k in (-N/2, N/2], folded
/// onto the one-sided spectrum, so E_i is real by construction. The phase
/// sign matches the tdoa_for_doa() convention (p leads q for tau > 0).
class SrpPhat {
 public:
  static constexpr double kPhatFloor = 1e-12;

  SrpPhat(const HalfSphereGrid& grid, ArrayGeometry geometry);

  /// Throws InvalidArgument if the channel count does not match the geometry.
  SteeredPowerMap power(const ChannelSpectra& spectra) const;

  const HalfSphereGrid& grid() const { return *grid_; }
  const ArrayGeometry& geometry() const { return geometry_; }

 private:
  const HalfSphereGrid* grid_;
  ArrayGeometry geometry_;
  std::vector<MicPair> pairs_;
  Eigen::MatrixXd tdoas_;  // grid points x pairs, samples
};

/// Convenience wrapper building an SrpPhat evaluator for one call.
SteeredPowerMap srp_phat_power(const ChannelSpectra& spectra, const HalfSphereGrid& grid,
                               const ArrayGeometry& geometry);

struct Peak {
  std::size_t index;
  double power;
};

/// Greedy top-k selection with non-maximum suppression: once a point is
/// picked, every point within `suppression_deg` of it is excluded. Output is
/// in descending power; equal powers resolve to the lower grid index.
std::vector<Peak> pick_peaks(const SteeredPowerMap& map, std::size_t k = 4,
                             double suppression_deg = 10.0);

}  // namespace arrayloc
