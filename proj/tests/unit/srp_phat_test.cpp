#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "arrayloc/errors.hpp"
#include "arrayloc/room_sim.hpp"
#include "arrayloc/srp_phat.hpp"
#include "oracles.hpp"

using namespace arrayloc;

namespace {

MultichannelFrame plane_wave_frame(const Vec3& dir, std::uint64_t seed, double snr_db = INFINITY) {
  const auto geom = ArrayGeometry::circular();
  const auto sig = white_noise(4096, seed);
  const Eigen::MatrixXd audio = render_plane_wave(geom, dir, sig, snr_db, seed + 1);
  MultichannelFrame f;
  f.samples = audio.middleCols(2048, 512);
  return f;
}

Vec3 random_upper(std::mt19937_64& rng, double min_z) {
  std::normal_distribution<double> n;
  while (true) {
    Vec3 v(n(rng), n(rng), n(rng));
    v.normalize();
    if (v.z() >= min_z) return v;
  }
}

// Eq. (14) evaluated literally over the symmetric band with naive DFTs. The
// lag of mic p behind mic q is computed from the physical arrival times.
std::vector<std::complex<double>> direct_srp(const MultichannelFrame& f, const HalfSphereGrid& g,
                                             const ArrayGeometry& geom) {
  const auto n = static_cast<int>(f.length());
  const auto ch = static_cast<int>(f.channels());
  const double pi = std::numbers::pi;
  std::vector<std::vector<std::complex<double>>> x(static_cast<std::size_t>(ch),
                                                   std::vector<std::complex<double>>(static_cast<std::size_t>(n)));
  for (int c = 0; c < ch; ++c)
    for (int k = 0; k < n; ++k) {
      std::complex<double> acc = 0;
      for (int i = 0; i < n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2 * pi * i / n);
        acc += f.samples(c, i) * w * std::polar(1.0, -2 * pi * double(k) * i / n);
      }
      x[c][k] = acc;
    }
  std::vector<std::complex<double>> e(g.size());
  for (std::size_t gi = 0; gi < g.size(); ++gi) {
    const Vec3 d = g.points[gi].vec();
    std::complex<double> total = 0;
    for (int p = 0; p < ch; ++p)
      for (int q = p + 1; q < ch; ++q) {
        const double arrive_p = -geom.mic_positions[p].dot(d) / geom.speed_of_sound * geom.sample_rate;
        const double arrive_q = -geom.mic_positions[q].dot(d) / geom.speed_of_sound * geom.sample_rate;
        const double lag = arrive_p - arrive_q;
        for (int k = -n / 2; k <= n / 2; ++k) {
          const auto xp = x[p][(k + n) % n], xq = x[q][(k + n) % n];
          const double mag = std::abs(xp) * std::abs(xq);
          if (mag < 1e-12) continue;
          const double w = (k == -n / 2 || k == n / 2) ? 0.5 : 1.0;
          total += w * xp * std::conj(xq) / mag * std::polar(1.0, 2 * pi * lag * k / n) / double(n);
        }
      }
    e[gi] = total;
  }
  return e;
}

}  // namespace

TEST(Stft, ZeroFrameGivesZeroSpectra) {
  MultichannelFrame f;
  f.samples = Eigen::MatrixXd::Zero(8, 512);
  const auto s = stft(f);
  EXPECT_EQ(s.bins.rows(), 8);
  EXPECT_EQ(s.bins.cols(), 257);
  EXPECT_EQ(s.bins.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Stft, SinusoidPeaksAtItsBin) {
  MultichannelFrame f;
  f.samples.resize(1, 512);
  for (int i = 0; i < 512; ++i) f.samples(0, i) = std::sin(2 * M_PI * 37 * i / 512.0);
  const auto s = stft(f);
  Eigen::Index k;
  s.bins.row(0).cwiseAbs().maxCoeff(&k);
  EXPECT_EQ(k, 37);
}

TEST(Stft, ParsevalAgainstDirectSummation) {
  MultichannelFrame f;
  f.samples = Eigen::MatrixXd::Zero(2, 256);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 256; ++i) f.samples(c, i) = n(rng);
  const auto s = stft(f);
  const auto w = hann_window(256);
  for (int c = 0; c < 2; ++c) {
    double time = 0;
    for (int i = 0; i < 256; ++i) time += std::pow(f.samples(c, i) * w[i], 2);
    double freq = std::norm(s.bins(c, 0)) + std::norm(s.bins(c, 128));
    for (int k = 1; k < 128; ++k) freq += 2 * std::norm(s.bins(c, k));
    EXPECT_NEAR(time, freq / 256.0, 1e-9 * time);
  }
}

TEST(Stft, RejectsNonPowerOfTwo) {
  MultichannelFrame f;
  f.samples = Eigen::MatrixXd::Zero(8, 500);
  EXPECT_THROW(stft(f), InvalidArgument);
}

TEST(FrameAudio, SplitsByHop) {
  const auto frames = frame_audio(Eigen::MatrixXd::Zero(8, 1024), 512, 128, 16000);
  ASSERT_EQ(frames.size(), 5u);
  EXPECT_EQ(frames[4].frame_index, 4);
}

TEST(SrpPhat, MatchesLiteralSymmetricBandSum) {
  const auto g = build_halfsphere_grid(1);
  const auto geom = ArrayGeometry::circular();
  MultichannelFrame f = plane_wave_frame(Vec3(0.3, 0.4, std::sqrt(0.75)), 11);
  f.samples = f.samples.leftCols(64).eval();
  const auto direct = direct_srp(f, g, geom);
  const auto map = srp_phat_power(stft(f), g, geom);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_LT(std::abs(direct[i].imag()), 1e-6 * std::abs(direct[i].real()) + 1e-9);
    EXPECT_NEAR(map.powers[i], direct[i].real(), 1e-9);
  }
}

TEST(SrpPhat, NoiselessArgmaxIsNearestGridPoint) {
  const auto& g = default_grid();
  const SrpPhat srp(g, ArrayGeometry::circular());
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const Vec3 d = random_upper(rng, 0.2);
    const auto map = srp.power(stft(plane_wave_frame(d, 100 + t)));
    const auto truth = g.nearest(d);
    EXPECT_LE(g.hop_distance(map.argmax(), truth), 1u) << d.transpose();
    EXPECT_LT(oracle::angle_deg(g.points[map.argmax()].vec(), d), 6.0);
  }
}

TEST(SrpPhat, IdenticalChannelsPointToZenith) {
  const auto& g = default_grid();
  MultichannelFrame f;
  const auto sig = white_noise(512, 9);
  f.samples.resize(8, 512);
  for (int c = 0; c < 8; ++c)
    for (int i = 0; i < 512; ++i) f.samples(c, i) = sig[static_cast<std::size_t>(i)];
  const auto map = srp_phat_power(stft(f), g, ArrayGeometry::circular());
  EXPECT_EQ(map.argmax(), g.nearest(Vec3(0, 0, 1)));
  EXPECT_NEAR(map.powers[map.argmax()], 28.0, 1e-9);
}

TEST(SrpPhat, GainInvariance) {
  const auto g = build_halfsphere_grid(2);
  const auto geom = ArrayGeometry::circular();
  MultichannelFrame f = plane_wave_frame(Vec3(0, 0.6, 0.8), 21);
  const auto base = srp_phat_power(stft(f), g, geom);
  for (int c = 0; c < 8; ++c) f.samples.row(c) *= 0.1 + 0.7 * c;
  const auto scaled = srp_phat_power(stft(f), g, geom);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(base.powers[i], scaled.powers[i], 1e-9);
}

TEST(SrpPhat, PowersAreFiniteAndGridSized) {
  const auto& g = default_grid();
  MultichannelFrame silent;
  silent.samples = Eigen::MatrixXd::Zero(8, 512);
  const auto map = srp_phat_power(stft(silent), g, ArrayGeometry::circular());
  ASSERT_EQ(map.powers.size(), g.size());
  for (double e : map.powers) EXPECT_EQ(e, 0.0);
}

TEST(SrpPhat, RejectsWrongChannelCount) {
  MultichannelFrame f;
  f.samples = Eigen::MatrixXd::Zero(4, 512);
  EXPECT_THROW(srp_phat_power(stft(f), default_grid(), ArrayGeometry::circular()), InvalidArgument);
}

TEST(PickPeaks, FirstPeakIsArgmax) {
  const auto& g = default_grid();
  const auto map = srp_phat_power(stft(plane_wave_frame(Vec3(0.6, 0, 0.8), 31)), g, ArrayGeometry::circular());
  const auto peaks = pick_peaks(map);
  ASSERT_FALSE(peaks.empty());
  EXPECT_EQ(peaks.front().index, map.argmax());
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    EXPECT_LE(peaks[i].power, peaks[i - 1].power);
    for (std::size_t j = 0; j < i; ++j)
      EXPECT_GT(oracle::angle_deg(g.points[peaks[i].index].vec(), g.points[peaks[j].index].vec()), 10.0);
  }
  const auto again = pick_peaks(map);
  ASSERT_EQ(again.size(), peaks.size());
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    EXPECT_EQ(again[i].index, peaks[i].index);
    EXPECT_EQ(again[i].power, peaks[i].power);
  }
}

TEST(PickPeaks, TwoSourcesAreTopTwo) {
  const auto& g = default_grid();
  const auto geom = ArrayGeometry::circular();
  const Vec3 a = Vec3(0.8, 0.0, 0.6), b = Vec3(-0.3, 0.7, std::sqrt(1 - 0.09 - 0.49));
  ASSERT_GT(oracle::angle_deg(a, b), 30.0);
  const Eigen::MatrixXd audio =
      render_plane_wave(geom, a, white_noise(4096, 41)) + render_plane_wave(geom, b, white_noise(4096, 42));
  MultichannelFrame f;
  f.samples = audio.middleCols(2048, 512);
  const auto peaks = pick_peaks(srp_phat_power(stft(f), g, geom), 4);
  ASSERT_GE(peaks.size(), 2u);
  std::vector<double> ang_a, ang_b;
  for (std::size_t i = 0; i < 2; ++i) {
    ang_a.push_back(oracle::angle_deg(g.points[peaks[i].index].vec(), a));
    ang_b.push_back(oracle::angle_deg(g.points[peaks[i].index].vec(), b));
  }
  EXPECT_LT(std::min(ang_a[0], ang_a[1]), 8.0);
  EXPECT_LT(std::min(ang_b[0], ang_b[1]), 8.0);
}

TEST(PickPeaks, ConstantMapBreaksTiesByLowestIndex) {
  const auto g = build_halfsphere_grid(2);
  SteeredPowerMap map{std::vector<double>(g.size(), 1.0), &g};
  const auto peaks = pick_peaks(map, 4);
  ASSERT_EQ(peaks.size(), 4u);
  EXPECT_EQ(peaks[0].index, 0u);
  // Each pick is the lowest index not suppressed by earlier picks.
  std::vector<std::size_t> chosen;
  for (const auto& p : peaks) {
    std::size_t expect = 0;
    while (true) {
      bool blocked = false;
      for (auto c : chosen) blocked |= oracle::angle_deg(g.points[c].vec(), g.points[expect].vec()) <= 10.0;
      if (!blocked) break;
      ++expect;
    }
    EXPECT_EQ(p.index, expect);
    chosen.push_back(p.index);
  }
}
