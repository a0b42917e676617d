#include "arrayloc/wav.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "arrayloc/errors.hpp"

namespace arrayloc {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("WAV: unexpected end of file");
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

AudioBuffer decode(const std::vector<char>& data, std::size_t channels, double rate, int bits, bool is_float) {
  const std::size_t bytes = static_cast<std::size_t>(bits / 8);
  const std::size_t frames = data.size() / (bytes * channels);
  AudioBuffer buf;
  buf.sample_rate = rate;
  buf.samples.resize(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < channels; ++c) {
      const char* p = data.data() + (f * channels + c) * bytes;
      double v = 0.0;
      if (is_float) {
        float x;
        std::memcpy(&x, p, sizeof(x));
        v = x;
      } else {
        std::int16_t x;
        std::memcpy(&x, p, sizeof(x));
        v = static_cast<double>(x) / 32768.0;
      }
      buf.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(f)) = v;
    }
  }
  return buf;
}

}  // namespace

AudioBuffer read_wav(std::istream& in) {
  std::array<char, 4> tag{};
  in.read(tag.data(), 4);
  if (!in || std::string(tag.data(), 4) != "RIFF") throw DataError("WAV: missing RIFF header");
  read_le<std::uint32_t>(in);
  in.read(tag.data(), 4);
  if (!in || std::string(tag.data(), 4) != "WAVE") throw DataError("WAV: not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (in.read(tag.data(), 4)) {
    const std::string id(tag.data(), 4);
    const auto size = read_le<std::uint32_t>(in);
    if (id == "fmt ") {
      format = read_le<std::uint16_t>(in);
      channels = read_le<std::uint16_t>(in);
      rate = read_le<std::uint32_t>(in);
      read_le<std::uint32_t>(in);
      read_le<std::uint16_t>(in);
      bits = read_le<std::uint16_t>(in);
      if (size > 16) in.ignore(size - 16);
      if (format == 0xFFFE) format = bits == 32 ? 3 : 1;  // WAVE_FORMAT_EXTENSIBLE
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError("WAV: data chunk before fmt chunk");
      const bool pcm16 = format == 1 && bits == 16;
      const bool f32 = format == 3 && bits == 32;
      if (!pcm16 && !f32) throw DataError("WAV: only 16-bit PCM and 32-bit float are supported");
      if (channels == 0) throw DataError("WAV: zero channels");
      std::vector<char> data(size);
      in.read(data.data(), size);
      data.resize(static_cast<std::size_t>(in.gcount()));
      return decode(data, channels, rate, bits, f32);
    } else {
      in.ignore(size + (size & 1U));
    }
  }
  throw DataError("WAV: no data chunk");
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  return read_wav(in);
}

void write_wav(std::ostream& out, const AudioBuffer& audio) {
  const auto channels = static_cast<std::uint16_t>(audio.samples.rows());
  const auto frames = static_cast<std::uint32_t>(audio.samples.cols());
  const std::uint32_t data_bytes = frames * channels * 4U;
  const auto rate = static_cast<std::uint32_t>(audio.sample_rate);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, 3);
  write_le<std::uint16_t>(out, channels);
  write_le<std::uint32_t>(out, rate);
  write_le<std::uint32_t>(out, rate * channels * 4U);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(channels * 4U));
  write_le<std::uint16_t>(out, 32);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (std::uint32_t f = 0; f < frames; ++f)
    for (std::uint16_t c = 0; c < channels; ++c) write_le<float>(out, static_cast<float>(audio.samples(c, f)));
}

AudioBuffer read_raw_pcm(std::istream& in, std::size_t channels, double sample_rate, RawFormat format) {
  if (channels == 0) throw InvalidArgument("raw PCM needs at least one channel");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return format == RawFormat::f32le ? decode(data, channels, sample_rate, 32, true)
                                    : decode(data, channels, sample_rate, 16, false);
}

}  // namespace arrayloc
