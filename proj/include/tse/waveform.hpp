// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tse {

inline constexpr int kDefaultSampleRate = 16000;

// Mono audio at a fixed sample rate.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  Waveform() = default;
  Waveform(std::vector<double> s, int rate)
      : samples(std::move(s)), sample_rate(rate) {}
  static Waveform zeros(std::size_t n, int rate = kDefaultSampleRate) {
    return Waveform(std::vector<double>(n, 0.0), rate);
  }

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Mean squared amplitude over the whole waveform.
inline double power(const Waveform& w) {
  if (w.empty()) return 0.0;
  double acc = 0.0;
  for (double s : w.samples) acc += s * s;
  return acc / static_cast<double>(w.size());
}

inline Waveform scaled(const Waveform& w, double gain) {
  Waveform out = w;
  for (double& s : out.samples) s *= gain;
  return out;
}

// Zero-pads (or crops) at the tail to exactly `length` samples.
inline Waveform fit_length(const Waveform& w, std::size_t length) {
  Waveform out = w;
  out.samples.resize(length, 0.0);
  return out;
}

class SampleRateMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedAudioFormat : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WavEncoding { kFloat32, kPcm16 };

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "WAV and checkpoint I/O assume a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t pos) {
  if (pos + sizeof(T) > buf.size()) {
    throw UnsupportedAudioFormat("truncated WAV header");
  }
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

}  // namespace detail

// Writes a mono RIFF/WAVE file. An optional comment is stored in a LIST/INFO
// ICMT chunk, which readers that only look for fmt/data ignore.
inline void write_wav(const std::filesystem::path& path, const Waveform& w,
                      WavEncoding encoding = WavEncoding::kFloat32,
                      const std::string& comment = {}) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());

  const std::uint16_t format = encoding == WavEncoding::kFloat32 ? 3 : 1;
  const std::uint16_t bits = encoding == WavEncoding::kFloat32 ? 32 : 16;
  const std::uint16_t block_align = bits / 8;
  const auto data_bytes =
      static_cast<std::uint32_t>(w.samples.size() * block_align);

  std::string info;
  if (!comment.empty()) {
    std::string text = comment;
    text.push_back('\0');
    if (text.size() % 2) text.push_back('\0');
    info = "INFO";
    info += "ICMT";
    const auto len = static_cast<std::uint32_t>(text.size());
    info.append(reinterpret_cast<const char*>(&len), 4);
    info += text;
  }
  const std::uint32_t list_bytes =
      info.empty() ? 0 : static_cast<std::uint32_t>(8 + info.size());

  os.write("RIFF", 4);
  detail::put<std::uint32_t>(os, 4 + (8 + 16) + list_bytes + (8 + data_bytes));
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::put<std::uint32_t>(os, 16);
  detail::put<std::uint16_t>(os, format);
  detail::put<std::uint16_t>(os, 1);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(w.sample_rate));
  detail::put<std::uint32_t>(
      os, static_cast<std::uint32_t>(w.sample_rate) * block_align);
  detail::put<std::uint16_t>(os, block_align);
  detail::put<std::uint16_t>(os, bits);
  if (!info.empty()) {
    os.write("LIST", 4);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(info.size()));
    os.write(info.data(), static_cast<std::streamsize>(info.size()));
  }
  os.write("data", 4);
  detail::put<std::uint32_t>(os, data_bytes);
  for (double s : w.samples) {
    if (encoding == WavEncoding::kFloat32) {
      detail::put<float>(os, static_cast<float>(s));
    } else {
      const long q = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
      detail::put<std::int16_t>(os, static_cast<std::int16_t>(q));
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

// Reads a mono 32-bit float or 16-bit PCM WAV file. When `expected_rate` is
// given, a file at any other rate is rejected.
inline Waveform read_wav(const std::filesystem::path& path,
                         std::optional<int> expected_rate = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open audio file: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)),
                        std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw UnsupportedAudioFormat("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto size = detail::get<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      format = detail::get<std::uint16_t>(buf, body);
      channels = detail::get<std::uint16_t>(buf, body + 2);
      rate = detail::get<std::uint32_t>(buf, body + 4);
      bits = detail::get<std::uint16_t>(buf, body + 14);
      if (format == 0xFFFE && size >= 40) {
        // WAVE_FORMAT_EXTENSIBLE: the subformat GUID starts with the tag.
        format = detail::get<std::uint16_t>(buf, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw UnsupportedAudioFormat("data chunk before fmt chunk");
      if (channels != 1) {
        throw UnsupportedAudioFormat("only mono audio is supported, got " +
                                     std::to_string(channels) + " channels");
      }
      if (expected_rate && static_cast<int>(rate) != *expected_rate) {
        throw SampleRateMismatch(path.string() + ": sample rate " +
                                 std::to_string(rate) + " Hz, expected " +
                                 std::to_string(*expected_rate) + " Hz");
      }
      const std::size_t avail = std::min<std::size_t>(size, buf.size() - body);
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      if (format == 3 && bits == 32) {
        const std::size_t n = avail / 4;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          w.samples[i] = detail::get<float>(buf, body + 4 * i);
        }
      } else if (format == 1 && bits == 16) {
        const std::size_t n = avail / 2;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          w.samples[i] = detail::get<std::int16_t>(buf, body + 2 * i) / 32768.0;
        }
      } else {
        throw UnsupportedAudioFormat(
            "unsupported WAV encoding (format " + std::to_string(format) +
            ", " + std::to_string(bits) + " bits) in " + path.string());
      }
      for (double s : w.samples) {
        if (!std::isfinite(s)) {
          throw UnsupportedAudioFormat("non-finite sample in " + path.string());
        }
      }
      return w;
    }
    pos = body + size + (size % 2);
  }
  throw UnsupportedAudioFormat("no data chunk in " + path.string());
}

// The ICMT comment written by write_wav, or an empty string.
inline std::string read_wav_comment(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open audio file: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)),
                        std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0) {
    throw UnsupportedAudioFormat("not a RIFF/WAVE file: " + path.string());
  }
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const auto size = detail::get<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(buf.data() + pos, "LIST", 4) == 0 && body + 4 <= buf.size() &&
        std::memcmp(buf.data() + body, "INFO", 4) == 0) {
      std::size_t sub = body + 4;
      const std::size_t end = std::min<std::size_t>(body + size, buf.size());
      while (sub + 8 <= end) {
        const auto len = detail::get<std::uint32_t>(buf, sub + 4);
        if (std::memcmp(buf.data() + sub, "ICMT", 4) == 0) {
          const std::size_t n = std::min<std::size_t>(len, end - sub - 8);
          std::string text(buf.data() + sub + 8, n);
          return text.substr(0, text.find('\0'));
        }
        sub += 8 + len + (len % 2);
      }
    }
    pos = body + size + (size % 2);
  }
  return {};
}

}  // namespace tse
