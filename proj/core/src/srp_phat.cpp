#include "arrayloc/srp_phat.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>

#include "arrayloc/errors.hpp"

namespace arrayloc {
namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

struct PlanDeleter {
  void operator()(fftw_plan_s* plan) const { fftw_destroy_plan(plan); }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;

// FFTW planning is not thread-safe; execution on a shared plan with
// new-array calls is.
fftw_plan r2c_plan(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, PlanHandle> plans;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = plans.find(n);
  if (it == plans.end()) {
    std::vector<double> in(n);
    std::vector<fftw_complex> out(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(),
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
    it = plans.emplace(n, PlanHandle(plan)).first;
  }
  return it->second.get();
}

}  // namespace

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

ChannelSpectra stft(const MultichannelFrame& frame) {
  const std::size_t n = frame.length();
  if (!is_power_of_two(n)) throw InvalidArgument("frame length must be a power of two");
  const std::vector<double> window = hann_window(n);
  fftw_plan plan = r2c_plan(n);

  ChannelSpectra out;
  out.frame_length = n;
  out.bins.resize(static_cast<Eigen::Index>(frame.channels()), static_cast<Eigen::Index>(n / 2 + 1));
  std::vector<double> in(n);
  std::vector<fftw_complex> spec(n / 2 + 1);
  for (std::size_t c = 0; c < frame.channels(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      in[i] = frame.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) * window[i];
    }
    fftw_execute_dft_r2c(plan, in.data(), spec.data());
    for (std::size_t k = 0; k <= n / 2; ++k) {
      out.bins(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = {spec[k][0], spec[k][1]};
    }
  }
  return out;
}

std::vector<MultichannelFrame> frame_audio(const Eigen::MatrixXd& audio, std::size_t frame_length,
                                           std::size_t hop, double sample_rate) {
  if (frame_length == 0 || hop == 0) throw InvalidArgument("frame length and hop must be positive");
  std::vector<MultichannelFrame> frames;
  const auto total = static_cast<std::size_t>(audio.cols());
  std::int64_t index = 0;
  for (std::size_t start = 0; start + frame_length <= total; start += hop) {
    MultichannelFrame f;
    f.samples = audio.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(frame_length));
    f.frame_index = index++;
    f.sample_rate = sample_rate;
    frames.push_back(std::move(f));
  }
  return frames;
}

std::size_t SteeredPowerMap::argmax() const {
  if (powers.empty()) throw InvalidArgument("empty power map");
  return static_cast<std::size_t>(std::max_element(powers.begin(), powers.end()) - powers.begin());
}

SrpPhat::SrpPhat(const HalfSphereGrid& grid, ArrayGeometry geometry)
    : grid_(&grid), geometry_(std::move(geometry)), pairs_(mic_pairs(geometry_.mic_count())) {
  tdoas_.resize(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(pairs_.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::vector<double> tau = tdoa_for_doa(geometry_, grid.points[i].vec());
    for (std::size_t j = 0; j < tau.size(); ++j) {
      tdoas_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tau[j];
    }
  }
}

SteeredPowerMap SrpPhat::power(const ChannelSpectra& spectra) const {
  if (static_cast<std::size_t>(spectra.bins.rows()) != geometry_.mic_count()) {
    throw InvalidArgument("channel count does not match the array geometry");
  }
  const std::size_t n = spectra.frame_length;
  const auto half = static_cast<Eigen::Index>(n / 2);
  if (spectra.bins.cols() != half + 1) throw InvalidArgument("spectra do not match frame length");

  // Phase-transformed cross-spectra, one row per pair, with the fold weight
  // (1 for DC and Nyquist, 2 otherwise) and the 1/N factor applied.
  Eigen::MatrixXcd cross(static_cast<Eigen::Index>(pairs_.size()), half + 1);
  for (std::size_t j = 0; j < pairs_.size(); ++j) {
    const auto p = static_cast<Eigen::Index>(pairs_[j].p);
    const auto q = static_cast<Eigen::Index>(pairs_[j].q);
    for (Eigen::Index k = 0; k <= half; ++k) {
      const std::complex<double> xp = spectra.bins(p, k);
      const std::complex<double> xq = spectra.bins(q, k);
      const double mag = std::abs(xp) * std::abs(xq);
      std::complex<double> g{0.0, 0.0};
      if (mag >= kPhatFloor) g = xp * std::conj(xq) / mag;
      const double weight = (k == 0 || k == half) ? 1.0 : 2.0;
      cross(static_cast<Eigen::Index>(j), k) = g * (weight / static_cast<double>(n));
    }
  }

  SteeredPowerMap map;
  map.grid = grid_;
  map.powers.assign(grid_->size(), 0.0);
  const double omega = 2.0 * M_PI / static_cast<double>(n);
  for (std::size_t i = 0; i < grid_->size(); ++i) {
    double e = 0.0;
    for (std::size_t j = 0; j < pairs_.size(); ++j) {
      const double tau = tdoas_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const std::complex<double> step = std::polar(1.0, -omega * tau);
      std::complex<double> phasor{1.0, 0.0};
      const std::complex<double>* row = &cross(static_cast<Eigen::Index>(j), 0);
      const Eigen::Index stride = cross.rows();
      double acc = 0.0;
      for (Eigen::Index k = 0; k <= half; ++k) {
        const std::complex<double> g = row[k * stride];
        acc += g.real() * phasor.real() - g.imag() * phasor.imag();
        phasor *= step;
      }
      e += acc;
    }
    map.powers[i] = e;
  }
  return map;
}

SteeredPowerMap srp_phat_power(const ChannelSpectra& spectra, const HalfSphereGrid& grid,
                               const ArrayGeometry& geometry) {
  return SrpPhat(grid, geometry).power(spectra);
}

std::vector<Peak> pick_peaks(const SteeredPowerMap& map, std::size_t k, double suppression_deg) {
  if (k == 0) throw InvalidArgument("pick_peaks requires k >= 1");
  if (map.grid == nullptr || map.grid->size() != map.powers.size()) {
    throw InvalidArgument("power map is not bound to a matching grid");
  }
  std::vector<std::size_t> order(map.powers.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return map.powers[a] > map.powers[b]; });

  const double cos_limit = std::cos(deg2rad(suppression_deg));
  std::vector<Peak> peaks;
  for (std::size_t idx : order) {
    if (peaks.size() == k) break;
    const Vec3& v = map.grid->points[idx].vec();
    const bool suppressed = std::any_of(peaks.begin(), peaks.end(), [&](const Peak& p) {
      return map.grid->points[p.index].vec().dot(v) >= cos_limit;
    });
    if (!suppressed) peaks.push_back({idx, map.powers[idx]});
  }
  return peaks;
}

}  // namespace arrayloc
