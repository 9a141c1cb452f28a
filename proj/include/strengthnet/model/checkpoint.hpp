#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "strengthnet/audio/mel.hpp"
#include "strengthnet/common/binary_io.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/model/config.hpp"
#include "strengthnet/model/strengthnet.hpp"

namespace strengthnet::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  StrengthNetConfig config;
  ParameterSet params;
  std::optional<audio::NormStats> norm_stats;
};

/// Layout: "STNT", version, config block (count + length-prefixed key/value
/// strings), norm-stats block (byte length + NRMS payload, 0 if absent), then
/// tensors (count; each name, rank, dims, float32 data).
inline std::string encode_checkpoint(const ParameterSet& params, const StrengthNetConfig& config,
                                     const std::optional<audio::NormStats>& norm_stats) {
  io::ByteWriter w;
  w.put_magic("STNT");
  w.put(kCheckpointVersion);
  const auto kv = to_key_values(config);
  w.put(static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    w.put_string(k);
    w.put_string(v);
  }
  if (norm_stats) {
    io::ByteWriter block;
    audio::write_norm_stats(block, *norm_stats);
    w.put(static_cast<std::uint32_t>(block.bytes().size()));
    w.put_magic(block.bytes());
  } else {
    w.put(std::uint32_t{0});
  }
  w.put(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params.tensors[i];
    w.put_string(params.names[i]);
    w.put(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put(static_cast<std::uint32_t>(d));
    w.put_span(std::span<const float>(t.data));
  }
  return w.take();
}

/// Decodes and validates a checkpoint. Tensor names and shapes must match the
/// layout of the stored config, and of `expected` when given.
inline Checkpoint decode_checkpoint(std::string_view bytes, const StrengthNetConfig* expected = nullptr) {
  io::ByteReader r(bytes, ErrorCode::kCorruptCheckpoint);
  if (!r.magic_matches("STNT")) fail(ErrorCode::kCorruptCheckpoint, "bad checkpoint magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kVersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                          std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  const auto n_fields = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_fields; ++i) {
    const auto key = r.get_string();
    const auto value = r.get_string();
    if (!set_field(ck.config, key, value)) {
      fail(ErrorCode::kCorruptCheckpoint, "unknown config key in checkpoint: " + key);
    }
  }
  validate(ck.config);

  const auto norm_bytes = r.get<std::uint32_t>();
  if (norm_bytes > 0) {
    const auto block = r.get_vector<char>(norm_bytes);
    if (norm_bytes != 8 + 8 * ck.config.mel_channels) {
      fail(ErrorCode::kCorruptCheckpoint, "norm-stats block has the wrong size");
    }
    io::ByteReader nr({block.data(), block.size()}, ErrorCode::kCorruptCheckpoint);
    ck.norm_stats = audio::read_norm_stats(nr, ck.config.mel_channels, ErrorCode::kCorruptCheckpoint);
  }

  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) fail(ErrorCode::kCorruptCheckpoint, "implausible tensor rank for " + name);
    ad::Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.get<std::uint32_t>());
    auto data = r.get_vector<float>(ad::numel(shape));
    ck.params.names.push_back(std::move(name));
    ck.params.tensors.emplace_back(std::move(shape), std::move(data));
  }
  if (!r.at_end()) fail(ErrorCode::kCorruptCheckpoint, "trailing bytes after tensors");

  auto check_layout = [&](const StrengthNetConfig& cfg, const char* against) {
    const auto layout = parameter_layout(cfg);
    if (layout.size() != ck.params.size()) {
      fail(ErrorCode::kShapeMismatch, std::string("tensor count differs from ") + against + " layout");
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (layout[i].first != ck.params.names[i] || layout[i].second != ck.params.tensors[i].shape) {
        fail(ErrorCode::kShapeMismatch, "tensor " + ck.params.names[i] + " " +
                                            ad::shape_string(ck.params.tensors[i].shape) + " does not match " +
                                            against + " (" + layout[i].first + " " +
                                            ad::shape_string(layout[i].second) + ")");
      }
    }
  };
  check_layout(ck.config, "stored config");
  if (expected) check_layout(*expected, "expected config");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                            const StrengthNetConfig& config, const std::optional<audio::NormStats>& norm_stats) {
  io::write_file(path, encode_checkpoint(params, config, norm_stats));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const StrengthNetConfig* expected = nullptr) {
  return decode_checkpoint(io::read_file(path), expected);
}

}  // namespace strengthnet::model
