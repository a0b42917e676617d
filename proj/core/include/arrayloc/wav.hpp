#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>

#include <Eigen/Core>

namespace arrayloc {

struct AudioBuffer {
  Eigen::MatrixXd samples;  ///< channels x frames, full scale = 1.0
  double sample_rate = 16000.0;
};

/// RIFF/WAVE with 16-bit PCM or 32-bit IEEE float samples.
AudioBuffer read_wav(std::istream& in);
AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes 32-bit float WAV.
void write_wav(std::ostream& out, const AudioBuffer& audio);

enum class RawFormat { s16le, f32le };

/// Headerless interleaved little-endian PCM.
AudioBuffer read_raw_pcm(std::istream& in, std::size_t channels, double sample_rate, RawFormat format);

}  // namespace arrayloc
