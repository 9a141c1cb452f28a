#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "strengthnet/audio/mel.hpp"
#include "strengthnet/common/binary_io.hpp"
#include "strengthnet/common/error.hpp"

namespace strengthnet::audio {

/// Statistical functionals computed over every descriptor series, in output
/// order.
enum class Functional : int {
  kMean,
  kStd,
  kMin,
  kMax,
  kRange,
  kMedian,
  kQuartile1,
  kQuartile3,
  kSkewness,
  kKurtosis,
  kSlope,
  kMeanAbsDelta,
  kMaxAbsDelta,
};
inline constexpr std::size_t kNumFunctionals = 13;

inline constexpr std::size_t kNumDeltaBands = 29;
/// energy, centroid, flux, then 29 band-averaged delta-mel series.
inline constexpr std::size_t kNumDerivedDescriptors = 3 + kNumDeltaBands;

enum class FeatureSet {
  kFull,     // 80 mel channels + 32 derived descriptors: 1456 values
  kReduced,  // the 32 derived descriptors only: 416 values
};

inline std::size_t feature_dimension(FeatureSet set, std::size_t mel_channels = 80) {
  const std::size_t descriptors =
      (set == FeatureSet::kFull ? mel_channels : 0) + kNumDerivedDescriptors;
  return descriptors * kNumFunctionals;
}

/// Fixed-length per-utterance vector consumed by the ranker.
struct UtteranceFeatureVector {
  std::vector<double> values;
  std::size_t dim() const { return values.size(); }
};

namespace detail {

/// Linear-interpolated quantile of sorted data (numpy's default rule).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

/// Appends the 13 functionals of `series` to `out`. Higher moments are 0 for
/// a (numerically) constant series.
inline void append_functionals(std::span<const double> series, std::vector<double>& out) {
  const auto n = static_cast<double>(series.size());
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : series) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double sd = std::sqrt(m2);
  const bool flat = sd <= 1e-12 * std::max(1.0, std::abs(mean));

  std::vector<double> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end());

  // Least-squares slope against the frame index.
  double slope = 0.0;
  if (series.size() > 1) {
    const double t_mean = (n - 1.0) / 2.0;
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < series.size(); ++t) {
      const double dt = static_cast<double>(t) - t_mean;
      num += dt * (series[t] - mean);
      den += dt * dt;
    }
    slope = num / den;
  }

  double mad = 0.0, max_ad = 0.0;
  for (std::size_t t = 1; t < series.size(); ++t) {
    const double d = std::abs(series[t] - series[t - 1]);
    mad += d;
    max_ad = std::max(max_ad, d);
  }
  if (series.size() > 1) mad /= n - 1.0;

  out.push_back(mean);
  out.push_back(sd);
  out.push_back(sorted.front());
  out.push_back(sorted.back());
  out.push_back(sorted.back() - sorted.front());
  out.push_back(quantile_sorted(sorted, 0.5));
  out.push_back(quantile_sorted(sorted, 0.25));
  out.push_back(quantile_sorted(sorted, 0.75));
  out.push_back(flat ? 0.0 : m3 / (m2 * sd));
  out.push_back(flat ? 0.0 : m4 / (m2 * m2) - 3.0);
  out.push_back(slope);
  out.push_back(mad);
  out.push_back(max_ad);
}

}  // namespace detail

/// First channel index of delta band `b` when `channels` mel channels are
/// split into kNumDeltaBands contiguous bands.
inline std::size_t delta_band_start(std::size_t b, std::size_t channels) {
  return b * channels / kNumDeltaBands;
}

/// Derived per-frame descriptor series of an (unnormalized) log-mel
/// spectrogram, in output order:
///   0  frame energy: log of summed mel energy (log-sum-exp over channels)
///   1  spectral centroid: channel index weighted by mel energy
///   2  spectral flux: L2 norm of the log-mel frame difference (T-1 values)
///   3+ band-averaged delta-mel over 29 contiguous channel bands (T-1 values)
inline std::vector<std::vector<double>> derived_descriptors(const MelSpectrogram& spec) {
  const std::size_t T = spec.num_frames;
  const std::size_t C = spec.num_channels;
  std::vector<std::vector<double>> out(kNumDerivedDescriptors);
  out[0].resize(T);
  out[1].resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto f = spec.frame(t);
    const double peak = *std::max_element(f.begin(), f.end());
    double total = 0.0, weighted = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double e = std::exp(static_cast<double>(f[c]) - peak);
      total += e;
      weighted += e * static_cast<double>(c);
    }
    out[0][t] = peak + std::log(total);
    out[1][t] = weighted / total;
  }
  for (std::size_t k = 2; k < kNumDerivedDescriptors; ++k) out[k].resize(T - 1);
  for (std::size_t t = 1; t < T; ++t) {
    double flux = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = static_cast<double>(spec.at(t, c)) - spec.at(t - 1, c);
      flux += d * d;
    }
    out[2][t - 1] = std::sqrt(flux);
    for (std::size_t b = 0; b < kNumDeltaBands; ++b) {
      const std::size_t lo = delta_band_start(b, C), hi = delta_band_start(b + 1, C);
      double acc = 0.0;
      for (std::size_t c = lo; c < hi; ++c) {
        acc += static_cast<double>(spec.at(t, c)) - spec.at(t - 1, c);
      }
      out[3 + b][t - 1] = acc / static_cast<double>(hi - lo);
    }
  }
  return out;
}

/// Layout: descriptor-major. For the full set, descriptors 0..C-1 are the mel
/// channels and C..C+31 the derived series; each contributes 13 consecutive
/// functionals in `Functional` order.
inline UtteranceFeatureVector functional_features(const MelSpectrogram& spec,
                                                  FeatureSet set = FeatureSet::kFull) {
  if (spec.num_frames < 2) {
    fail(ErrorCode::kTooFewFrames, "functional features need at least 2 frames, got " +
                                       std::to_string(spec.num_frames));
  }
  UtteranceFeatureVector fv;
  fv.values.reserve(feature_dimension(set, spec.num_channels));
  if (set == FeatureSet::kFull) {
    std::vector<double> series(spec.num_frames);
    for (std::size_t c = 0; c < spec.num_channels; ++c) {
      for (std::size_t t = 0; t < spec.num_frames; ++t) series[t] = spec.at(t, c);
      detail::append_functionals(series, fv.values);
    }
  }
  for (const auto& series : derived_descriptors(spec)) {
    detail::append_functionals(series, fv.values);
  }
  for (double v : fv.values) {
    require(std::isfinite(v), ErrorCode::kNonFiniteValue, "non-finite functional feature");
  }
  return fv;
}

inline constexpr std::uint32_t kFeatureFileVersion = 1;

/// Utterance feature cache: magic "FUNC", version, D, then D float64 values.
inline void save_features(const std::filesystem::path& path, const UtteranceFeatureVector& fv) {
  io::ByteWriter w;
  w.put_magic("FUNC");
  w.put(kFeatureFileVersion);
  w.put(static_cast<std::uint32_t>(fv.values.size()));
  w.put_span(std::span<const double>(fv.values));
  io::write_file(path, w.bytes());
}

inline UtteranceFeatureVector load_features(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, ErrorCode::kParseError);
  if (!r.magic_matches("FUNC")) fail(ErrorCode::kParseError, "bad feature file magic");
  if (r.get<std::uint32_t>() != kFeatureFileVersion) {
    fail(ErrorCode::kVersionMismatch, "feature file version");
  }
  UtteranceFeatureVector fv;
  fv.values = r.get_vector<double>(r.get<std::uint32_t>());
  return fv;
}

}  // namespace strengthnet::audio
