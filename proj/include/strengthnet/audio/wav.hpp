#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "strengthnet/common/binary_io.hpp"
#include "strengthnet/common/error.hpp"

namespace strengthnet::audio {

inline constexpr int kSampleRate = 16000;

/// Decoded mono 16 kHz audio; samples are PCM16 values divided by 32768.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
  std::string utterance_id;
};

namespace detail {

inline constexpr std::uint16_t kFormatPcm = 1;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace detail

/// Parses an in-memory RIFF/WAVE image. Only PCM16 mono 16 kHz is accepted;
/// anything else must be converted by the caller beforehand.
inline AudioClip decode_wav(std::string_view bytes, std::string utterance_id = {}) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" || bytes.substr(8, 4) != "WAVE") {
    fail(ErrorCode::kNotWav, "missing RIFF/WAVE header");
  }
  io::ByteReader reader(bytes.substr(12), ErrorCode::kNotWav);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (reader.remaining() >= 8) {
    std::string id(4, '\0');
    for (auto& c : id) c = static_cast<char>(reader.get<std::uint8_t>());
    const auto size = reader.get<std::uint32_t>();
    if (id == "fmt ") {
      if (size < 16) fail(ErrorCode::kNotWav, "fmt chunk too small");
      auto body = reader.get_vector<char>(size);
      io::ByteReader fmt({body.data(), body.size()}, ErrorCode::kNotWav);
      format = fmt.get<std::uint16_t>();
      channels = fmt.get<std::uint16_t>();
      rate = fmt.get<std::uint32_t>();
      fmt.get<std::uint32_t>();  // byte rate
      fmt.get<std::uint16_t>();  // block align
      bits = fmt.get<std::uint16_t>();
      if (format == detail::kFormatExtensible && size >= 26) {
        fmt.get<std::uint16_t>();  // cbSize
        fmt.get<std::uint16_t>();  // valid bits
        fmt.get<std::uint32_t>();  // channel mask
        format = fmt.get<std::uint16_t>();
      }
      have_fmt = true;
      if (size % 2 == 1 && reader.remaining() > 0) reader.get<std::uint8_t>();
    } else if (id == "data") {
      if (!have_fmt) fail(ErrorCode::kNotWav, "data chunk before fmt chunk");
      if (format != detail::kFormatPcm) {
        fail(ErrorCode::kUnsupportedFormat, "only integer PCM is supported");
      }
      if (channels != 1) {
        fail(ErrorCode::kUnsupportedFormat,
             "expected mono audio, got " + std::to_string(channels) + " channels");
      }
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        fail(ErrorCode::kUnsupportedFormat,
             "expected 16000 Hz, got " + std::to_string(rate) + " Hz");
      }
      if (bits != 16) {
        fail(ErrorCode::kUnsupportedFormat,
             "expected 16-bit samples, got " + std::to_string(bits));
      }
      // Tolerate writers that leave a placeholder size on the last chunk.
      const std::size_t avail = std::min<std::size_t>(size, reader.remaining());
      const auto pcm = reader.get_vector<std::int16_t>(avail / 2);
      AudioClip clip;
      clip.utterance_id = std::move(utterance_id);
      clip.samples.reserve(pcm.size());
      for (auto s : pcm) clip.samples.push_back(static_cast<float>(s) / 32768.0f);
      return clip;
    } else {
      reader.get_vector<char>(std::min<std::size_t>(size + (size % 2), reader.remaining()));
    }
  }
  fail(ErrorCode::kNotWav, have_fmt ? "missing data chunk" : "missing fmt chunk");
}

inline AudioClip load_wav(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kIoError, "no such file " + path.string());
  return decode_wav(io::read_file(path), path.stem().string());
}

/// Encodes samples as PCM16 mono 16 kHz. Values are clipped to [-1, 1) and
/// rounded to the nearest integer code.
inline std::string encode_wav(std::span<const float> samples) {
  io::ByteWriter w;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  w.put_magic("RIFF");
  w.put<std::uint32_t>(36 + data_bytes);
  w.put_magic("WAVE");
  w.put_magic("fmt ");
  w.put<std::uint32_t>(16);
  w.put<std::uint16_t>(detail::kFormatPcm);
  w.put<std::uint16_t>(1);
  w.put<std::uint32_t>(kSampleRate);
  w.put<std::uint32_t>(kSampleRate * 2);
  w.put<std::uint16_t>(2);
  w.put<std::uint16_t>(16);
  w.put_magic("data");
  w.put<std::uint32_t>(data_bytes);
  for (float s : samples) {
    const double scaled = std::nearbyint(static_cast<double>(s) * 32768.0);
    w.put(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
  }
  return w.take();
}

inline void save_wav(const std::filesystem::path& path, std::span<const float> samples) {
  io::write_file(path, encode_wav(samples));
}

}  // namespace strengthnet::audio
