#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include "strengthnet/audio/wav.hpp"
#include "strengthnet/common/binary_io.hpp"
#include "strengthnet/common/error.hpp"

namespace strengthnet::audio {

/// Framing and filterbank settings. Defaults give 50 ms frames with a
/// 12.5 ms hop at 16 kHz and 80 HTK-mel channels over 0-8 kHz.
struct MelConfig {
  int sample_rate = kSampleRate;
  int frame_length = 800;
  int hop_length = 200;
  int fft_size = 1024;
  int num_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

inline std::size_t num_frames(std::size_t num_samples, const MelConfig& cfg = {}) {
  const auto frame = static_cast<std::size_t>(cfg.frame_length);
  if (num_samples < frame) return 0;
  return 1 + (num_samples - frame) / static_cast<std::size_t>(cfg.hop_length);
}

/// Triangular filters on the HTK mel scale, applied to a one-sided power
/// spectrum of fft_size/2+1 bins.
class MelFilterbank {
 public:
  explicit MelFilterbank(const MelConfig& cfg = {})
      : num_mels_(cfg.num_mels), num_bins_(cfg.fft_size / 2 + 1) {
    require(cfg.num_mels > 0 && cfg.fft_size > 0 && cfg.f_max > cfg.f_min,
            ErrorCode::kInvalidArgument, "bad filterbank configuration");
    const double mel_lo = hz_to_mel(cfg.f_min);
    const double mel_hi = hz_to_mel(cfg.f_max);
    std::vector<double> edges(static_cast<std::size_t>(num_mels_) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                        static_cast<double>(num_mels_ + 1));
    }
    centers_.assign(edges.begin() + 1, edges.end() - 1);
    weights_.assign(static_cast<std::size_t>(num_mels_ * num_bins_), 0.0);
    const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
    for (int m = 0; m < num_mels_; ++m) {
      const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
      for (int k = 0; k < num_bins_; ++k) {
        const double f = k * bin_hz;
        double w = 0.0;
        if (f > left && f <= center) {
          w = (f - left) / (center - left);
        } else if (f > center && f < right) {
          w = (right - f) / (right - center);
        }
        weights_[static_cast<std::size_t>(m * num_bins_ + k)] = w;
      }
    }
  }

  int num_mels() const { return num_mels_; }
  int num_bins() const { return num_bins_; }
  std::span<const double> center_frequencies() const { return centers_; }
  std::span<const double> row(int m) const {
    return {weights_.data() + static_cast<std::size_t>(m) * num_bins_,
            static_cast<std::size_t>(num_bins_)};
  }

  void apply(std::span<const double> power, std::span<double> out) const {
    for (int m = 0; m < num_mels_; ++m) {
      const auto w = row(m);
      double acc = 0.0;
      for (int k = 0; k < num_bins_; ++k) acc += w[k] * power[k];
      out[m] = acc;
    }
  }

 private:
  int num_mels_;
  int num_bins_;
  std::vector<double> centers_;
  std::vector<double> weights_;
};

namespace detail {

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};

/// Real-to-complex plan shared across threads. Planning goes through a mutex
/// (FFTW planners are not thread-safe); execution uses the new-array API.
inline fftw_plan r2c_plan(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<fftw_plan_s, FftwPlanDeleter>> plans;
  std::lock_guard lock(mu);
  auto& slot = plans[n];
  if (!slot) {
    std::vector<double> in(static_cast<std::size_t>(n));
    std::vector<fftw_complex> out(static_cast<std::size_t>(n / 2 + 1));
    slot.reset(fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE | FFTW_UNALIGNED));
  }
  return slot.get();
}

inline std::vector<double> hann_window(int length) {
  // Periodic Hann, the usual choice for STFT analysis.
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  }
  return w;
}

}  // namespace detail

/// T x C matrix of log-mel energies, time major.
struct MelSpectrogram {
  std::size_t num_frames = 0;
  std::size_t num_channels = 0;
  std::vector<float> frames;
  bool normalized = false;

  float at(std::size_t t, std::size_t c) const { return frames[t * num_channels + c]; }
  float& at(std::size_t t, std::size_t c) { return frames[t * num_channels + c]; }
  std::span<const float> frame(std::size_t t) const {
    return {frames.data() + t * num_channels, num_channels};
  }
};

/// Mel-filtered power per frame before the log, in double precision.
inline std::vector<double> mel_power(std::span<const float> samples, const MelConfig& cfg = {}) {
  const std::size_t frames = num_frames(samples.size(), cfg);
  if (frames == 0) {
    fail(ErrorCode::kTooShort, "clip has " + std::to_string(samples.size()) +
                                   " samples, need at least " + std::to_string(cfg.frame_length));
  }
  require(cfg.fft_size >= cfg.frame_length, ErrorCode::kInvalidArgument,
          "fft_size must cover the frame");
  static const MelFilterbank default_bank{};
  const bool is_default = cfg.sample_rate == kSampleRate && cfg.fft_size == 1024 &&
                          cfg.num_mels == 80 && cfg.f_min == 0.0 && cfg.f_max == 8000.0;
  std::unique_ptr<MelFilterbank> custom;
  if (!is_default) custom = std::make_unique<MelFilterbank>(cfg);
  const MelFilterbank& bank = is_default ? default_bank : *custom;

  const auto window = detail::hann_window(cfg.frame_length);
  const auto n_bins = static_cast<std::size_t>(cfg.fft_size / 2 + 1);
  std::vector<double> buffer(static_cast<std::size_t>(cfg.fft_size));
  std::vector<fftw_complex> spectrum(n_bins);
  std::vector<double> power(n_bins);
  std::vector<double> out(frames * static_cast<std::size_t>(cfg.num_mels));
  fftw_plan plan = detail::r2c_plan(cfg.fft_size);

  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * static_cast<std::size_t>(cfg.hop_length);
    std::fill(buffer.begin(), buffer.end(), 0.0);
    for (int i = 0; i < cfg.frame_length; ++i) {
      buffer[i] = static_cast<double>(samples[start + i]) * window[i];
    }
    fftw_execute_dft_r2c(plan, buffer.data(), spectrum.data());
    for (std::size_t k = 0; k < n_bins; ++k) {
      power[k] = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
    }
    bank.apply(power, std::span<double>(out).subspan(t * cfg.num_mels, cfg.num_mels));
  }
  return out;
}

inline MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelConfig& cfg = {}) {
  require(clip.sample_rate == cfg.sample_rate, ErrorCode::kUnsupportedFormat,
          "sample rate mismatch");
  const auto power = mel_power(clip.samples, cfg);
  MelSpectrogram spec;
  spec.num_channels = static_cast<std::size_t>(cfg.num_mels);
  spec.num_frames = power.size() / spec.num_channels;
  spec.frames.resize(power.size());
  for (std::size_t i = 0; i < power.size(); ++i) {
    spec.frames[i] = static_cast<float>(std::log(std::max(power[i], cfg.log_floor)));
  }
  return spec;
}

/// Per-channel statistics used to standardize model inputs.
struct NormStats {
  std::vector<float> mean;
  std::vector<float> stddev;
};

inline constexpr double kStdFloor = 1e-8;

inline NormStats compute_norm_stats(std::span<const MelSpectrogram> specs) {
  if (specs.empty()) fail(ErrorCode::kEmptyCorpus, "no spectrograms to normalize");
  const std::size_t channels = specs.front().num_channels;
  std::vector<double> sum(channels, 0.0), sum_sq(channels, 0.0);
  std::size_t count = 0;
  for (const auto& s : specs) {
    require(s.num_channels == channels, ErrorCode::kShapeMismatch,
            "spectrograms disagree on channel count");
    for (std::size_t t = 0; t < s.num_frames; ++t) {
      for (std::size_t c = 0; c < channels; ++c) sum[c] += s.at(t, c);
    }
    count += s.num_frames;
  }
  if (count == 0) fail(ErrorCode::kEmptyCorpus, "corpus has no frames");
  NormStats stats;
  stats.mean.resize(channels);
  stats.stddev.resize(channels);
  std::vector<double> mean(channels);
  for (std::size_t c = 0; c < channels; ++c) mean[c] = sum[c] / static_cast<double>(count);
  // Two-pass variance; the one-pass form cancels badly on log-floored silence.
  for (const auto& s : specs) {
    for (std::size_t t = 0; t < s.num_frames; ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = s.at(t, c) - mean[c];
        sum_sq[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    stats.mean[c] = static_cast<float>(mean[c]);
    stats.stddev[c] = static_cast<float>(std::sqrt(sum_sq[c] / static_cast<double>(count)));
  }
  return stats;
}

inline MelSpectrogram apply_norm_stats(const MelSpectrogram& spec, const NormStats& stats) {
  require(stats.mean.size() == spec.num_channels && stats.stddev.size() == spec.num_channels,
          ErrorCode::kShapeMismatch, "norm stats channel count differs from spectrogram");
  MelSpectrogram out = spec;
  for (std::size_t t = 0; t < spec.num_frames; ++t) {
    for (std::size_t c = 0; c < spec.num_channels; ++c) {
      const double denom = std::max(static_cast<double>(stats.stddev[c]), kStdFloor);
      out.at(t, c) = static_cast<float>((spec.at(t, c) - static_cast<double>(stats.mean[c])) / denom);
    }
  }
  out.normalized = true;
  return out;
}

struct NormalizedCorpus {
  std::vector<MelSpectrogram> specs;
  NormStats stats;
};

inline NormalizedCorpus normalize_corpus(std::span<const MelSpectrogram> specs) {
  NormalizedCorpus out;
  out.stats = compute_norm_stats(specs);
  out.specs.reserve(specs.size());
  for (const auto& s : specs) out.specs.push_back(apply_norm_stats(s, out.stats));
  return out;
}

// ---- feature cache files ---------------------------------------------------

inline constexpr std::uint32_t kMelFileVersion = 1;
inline constexpr std::uint32_t kNormFileVersion = 1;

inline std::string encode_mel(const MelSpectrogram& spec) {
  io::ByteWriter w;
  w.put_magic("MELF");
  w.put(kMelFileVersion);
  w.put(static_cast<std::uint32_t>(spec.num_frames));
  w.put(static_cast<std::uint32_t>(spec.num_channels));
  w.put_span(std::span<const float>(spec.frames));
  return w.take();
}

inline MelSpectrogram decode_mel(std::string_view bytes) {
  io::ByteReader r(bytes, ErrorCode::kParseError);
  if (!r.magic_matches("MELF")) fail(ErrorCode::kParseError, "bad mel file magic");
  if (r.get<std::uint32_t>() != kMelFileVersion) fail(ErrorCode::kVersionMismatch, "mel file version");
  MelSpectrogram spec;
  spec.num_frames = r.get<std::uint32_t>();
  spec.num_channels = r.get<std::uint32_t>();
  spec.frames = r.get_vector<float>(spec.num_frames * spec.num_channels);
  if (!r.at_end()) fail(ErrorCode::kParseError, "trailing bytes in mel file");
  return spec;
}

inline void save_mel(const std::filesystem::path& path, const MelSpectrogram& spec) {
  io::write_file(path, encode_mel(spec));
}

inline MelSpectrogram load_mel(const std::filesystem::path& path) {
  return decode_mel(io::read_file(path));
}

inline void write_norm_stats(io::ByteWriter& w, const NormStats& stats) {
  w.put_magic("NRMS");
  w.put(kNormFileVersion);
  w.put_span(std::span<const float>(stats.mean));
  w.put_span(std::span<const float>(stats.stddev));
}

/// The NRMS layout has no channel count; callers pass the expected one.
inline NormStats read_norm_stats(io::ByteReader& r, std::size_t channels, ErrorCode code) {
  if (!r.magic_matches("NRMS")) fail(code, "bad norm stats magic");
  if (r.get<std::uint32_t>() != kNormFileVersion) fail(ErrorCode::kVersionMismatch, "norm stats version");
  NormStats stats;
  stats.mean = r.get_vector<float>(channels);
  stats.stddev = r.get_vector<float>(channels);
  return stats;
}

inline void save_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
  io::ByteWriter w;
  write_norm_stats(w, stats);
  io::write_file(path, w.bytes());
}

inline NormStats load_norm_stats(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() < 8 || (bytes.size() - 8) % 8 != 0) {
    fail(ErrorCode::kParseError, "norm stats file has an invalid size");
  }
  io::ByteReader r(bytes, ErrorCode::kParseError);
  auto stats = read_norm_stats(r, (bytes.size() - 8) / 8, ErrorCode::kParseError);
  return stats;
}

}  // namespace strengthnet::audio
