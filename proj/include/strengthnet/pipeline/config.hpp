#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>

#include "strengthnet/common/binary_io.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/model/config.hpp"

namespace strengthnet::pipeline {

struct SplitRatio {
  std::size_t train = 8;
  std::size_t val = 1;
  std::size_t test = 1;
  std::size_t total() const { return train + val + test; }
};

struct TrainingConfig {
  std::size_t batch_size = 64;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;
  SplitRatio split_ratio;
  std::size_t patience = 30;
  std::size_t max_epochs = 300;
  std::uint64_t seed = 0;
  /// Threads computing per-utterance gradients. Rows are statically assigned
  /// to workers and reduced in worker order, so results depend on this value
  /// but not on scheduling.
  std::size_t workers = 1;
  /// Writes 0 for the wall-clock field so logs are byte-reproducible.
  bool deterministic_log = false;
  /// Length-bucketing window, in batches.
  std::size_t bucket_batches = 4;
};

inline void validate(const TrainingConfig& c) {
  auto bad = [](const std::string& what) { fail(ErrorCode::kInvalidArgument, "training config: " + what); };
  if (c.batch_size == 0) bad("batch_size must be positive");
  if (!(c.lr >= 0.0)) bad("lr must be non-negative");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) bad("betas must be in [0,1)");
  if (!(c.epsilon > 0.0)) bad("epsilon must be positive");
  if (c.split_ratio.train == 0 || c.split_ratio.total() == 0) bad("split ratio needs a training share");
  if (c.patience < 1) bad("patience must be at least 1");
  if (c.max_epochs < 1) bad("max_epochs must be at least 1");
  if (c.workers < 1) bad("workers must be at least 1");
  if (c.bucket_batches < 1) bad("bucket_batches must be at least 1");
}

/// Model and training settings read from one flat key=value file.
struct RunConfig {
  model::StrengthNetConfig model;
  TrainingConfig training;
};

namespace detail {

inline bool parse_bool(std::string_view v, std::string_view key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorCode::kParseError, "bad boolean '" + std::string(v) + "' for " + std::string(key));
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == s.npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

inline bool set_field(TrainingConfig& c, std::string_view key, std::string_view value) {
  using model::detail::parse_real;
  using model::detail::parse_size;
  if (key == "batch_size") {
    c.batch_size = parse_size(value, key);
  } else if (key == "lr") {
    c.lr = parse_real(value, key);
  } else if (key == "beta1") {
    c.beta1 = parse_real(value, key);
  } else if (key == "beta2") {
    c.beta2 = parse_real(value, key);
  } else if (key == "epsilon") {
    c.epsilon = parse_real(value, key);
  } else if (key == "split_ratio") {
    const auto parts = model::detail::split(value, ':');
    if (parts.size() != 3) fail(ErrorCode::kParseError, "split_ratio must look like 8:1:1");
    c.split_ratio = {parse_size(parts[0], key), parse_size(parts[1], key), parse_size(parts[2], key)};
  } else if (key == "patience") {
    c.patience = parse_size(value, key);
  } else if (key == "max_epochs") {
    c.max_epochs = parse_size(value, key);
  } else if (key == "seed") {
    c.seed = parse_size(value, key);
  } else if (key == "workers") {
    c.workers = parse_size(value, key);
  } else if (key == "deterministic_log") {
    c.deterministic_log = detail::parse_bool(value, key);
  } else if (key == "bucket_batches") {
    c.bucket_batches = parse_size(value, key);
  } else {
    return false;
  }
  return true;
}

/// Parses `key = value` lines; '#' starts a comment. Unknown keys are errors.
inline RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != line.npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == line.npos) fail(ErrorCode::kParseError, "config line " + std::to_string(line_no) + " has no '='");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (!model::set_field(cfg.model, key, value) && !set_field(cfg.training, key, value)) {
      fail(ErrorCode::kParseError, "unknown config key '" + std::string(key) + "' on line " + std::to_string(line_no));
    }
  }
  model::validate(cfg.model);
  validate(cfg.training);
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(io::read_file(path)); }

}  // namespace strengthnet::pipeline
