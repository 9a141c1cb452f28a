#pragma once

#include <charconv>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "strengthnet/autodiff/ops.hpp"
#include "strengthnet/common/error.hpp"

namespace strengthnet::model {

struct StrengthNetConfig {
  std::size_t mel_channels = 80;
  std::vector<std::size_t> conv_block_filters = {16, 32, 64, 128};
  std::size_t layers_per_block = 3;
  /// Stride of each layer inside a block, (time, freq).
  std::vector<ad::Stride> block_strides = {{1, 1}, {1, 1}, {1, 3}};
  std::size_t kernel_time = 3;
  std::size_t kernel_freq = 3;
  std::size_t bilstm_hidden = 128;
  std::size_t fc_hidden = 128;
  std::size_t num_emotions = 4;
  double dropout = 0.3;

  friend bool operator==(const StrengthNetConfig& a, const StrengthNetConfig& b) {
    auto strides_eq = [](const auto& x, const auto& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].time != y[i].time || x[i].freq != y[i].freq) return false;
      }
      return true;
    };
    return a.mel_channels == b.mel_channels && a.conv_block_filters == b.conv_block_filters &&
           a.layers_per_block == b.layers_per_block && strides_eq(a.block_strides, b.block_strides) &&
           a.kernel_time == b.kernel_time && a.kernel_freq == b.kernel_freq &&
           a.bilstm_hidden == b.bilstm_hidden && a.fc_hidden == b.fc_hidden &&
           a.num_emotions == b.num_emotions && a.dropout == b.dropout;
  }
};

/// Frequency bins left after each block, starting with the input width.
inline std::vector<std::size_t> frequency_chain(const StrengthNetConfig& c) {
  std::vector<std::size_t> chain{c.mel_channels};
  std::size_t f = c.mel_channels;
  for (std::size_t b = 0; b < c.conv_block_filters.size(); ++b) {
    for (const auto& s : c.block_strides) f = ad::same_output_length(f, s.freq);
    chain.push_back(f);
  }
  return chain;
}

/// Width of the per-frame encoder output: remaining frequency bins times the
/// last block's filter count.
inline std::size_t encoder_output_dim(const StrengthNetConfig& c) {
  return frequency_chain(c).back() * c.conv_block_filters.back();
}

inline void validate(const StrengthNetConfig& c) {
  auto bad = [](const std::string& what) { fail(ErrorCode::kInvalidArgument, "model config: " + what); };
  if (c.mel_channels == 0) bad("mel_channels must be positive");
  if (c.conv_block_filters.empty()) bad("conv_block_filters is empty");
  for (auto f : c.conv_block_filters) {
    if (f == 0) bad("filter counts must be positive");
  }
  if (c.layers_per_block == 0) bad("layers_per_block must be positive");
  if (c.block_strides.size() != c.layers_per_block) bad("block_strides needs one entry per layer");
  for (const auto& s : c.block_strides) {
    if (s.time == 0 || s.freq == 0) bad("strides must be positive");
    if (s.time != 1) bad("time strides must be 1 (frames are never downsampled)");
  }
  if (c.kernel_time == 0 || c.kernel_freq == 0) bad("kernel must be positive");
  if (c.bilstm_hidden == 0 || c.fc_hidden == 0) bad("hidden sizes must be positive");
  if (c.num_emotions < 2) bad("num_emotions must be at least 2");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) bad("dropout must be in [0, 1)");
  if (frequency_chain(c).back() < 1) bad("frequency axis collapses to zero");
}

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == s.npos ? s.npos : pos - start));
    if (pos == s.npos) break;
    start = pos + 1;
  }
  return parts;
}

inline std::size_t parse_size(std::string_view s, std::string_view key) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorCode::kParseError, "bad integer '" + std::string(s) + "' for " + std::string(key));
  }
  return v;
}

inline double parse_real(std::string_view s, std::string_view key) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorCode::kParseError, "bad number '" + std::string(s) + "' for " + std::string(key));
  }
  return v;
}

inline std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Flat key/value view of the config; the same keys are used by config files
/// and the checkpoint header.
inline std::vector<std::pair<std::string, std::string>> to_key_values(const StrengthNetConfig& c) {
  std::string strides;
  for (std::size_t i = 0; i < c.block_strides.size(); ++i) {
    if (i) strides += ',';
    strides += std::to_string(c.block_strides[i].time) + 'x' + std::to_string(c.block_strides[i].freq);
  }
  return {
      {"mel_channels", std::to_string(c.mel_channels)},
      {"conv_block_filters", detail::join_sizes(c.conv_block_filters)},
      {"layers_per_block", std::to_string(c.layers_per_block)},
      {"block_strides", strides},
      {"kernel", std::to_string(c.kernel_time) + 'x' + std::to_string(c.kernel_freq)},
      {"bilstm_hidden", std::to_string(c.bilstm_hidden)},
      {"fc_hidden", std::to_string(c.fc_hidden)},
      {"num_emotions", std::to_string(c.num_emotions)},
      {"dropout", detail::format_real(c.dropout)},
  };
}

/// Applies one key. Returns false when the key is not a model field.
inline bool set_field(StrengthNetConfig& c, std::string_view key, std::string_view value) {
  if (key == "mel_channels") {
    c.mel_channels = detail::parse_size(value, key);
  } else if (key == "conv_block_filters") {
    c.conv_block_filters.clear();
    for (auto part : detail::split(value, ',')) c.conv_block_filters.push_back(detail::parse_size(part, key));
  } else if (key == "layers_per_block") {
    c.layers_per_block = detail::parse_size(value, key);
  } else if (key == "block_strides") {
    c.block_strides.clear();
    for (auto part : detail::split(value, ',')) {
      auto tf = detail::split(part, 'x');
      if (tf.size() != 2) fail(ErrorCode::kParseError, "stride '" + std::string(part) + "' is not TxF");
      c.block_strides.push_back({detail::parse_size(tf[0], key), detail::parse_size(tf[1], key)});
    }
  } else if (key == "kernel") {
    auto tf = detail::split(value, 'x');
    if (tf.size() != 2) fail(ErrorCode::kParseError, "kernel '" + std::string(value) + "' is not TxF");
    c.kernel_time = detail::parse_size(tf[0], key);
    c.kernel_freq = detail::parse_size(tf[1], key);
  } else if (key == "bilstm_hidden") {
    c.bilstm_hidden = detail::parse_size(value, key);
  } else if (key == "fc_hidden") {
    c.fc_hidden = detail::parse_size(value, key);
  } else if (key == "num_emotions") {
    c.num_emotions = detail::parse_size(value, key);
  } else if (key == "dropout") {
    c.dropout = detail::parse_real(value, key);
  } else {
    return false;
  }
  return true;
}

}  // namespace strengthnet::model
