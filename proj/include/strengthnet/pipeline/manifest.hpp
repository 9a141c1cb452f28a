#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "strengthnet/common/binary_io.hpp"
#include "strengthnet/common/error.hpp"

namespace strengthnet {

inline constexpr std::string_view kNeutral = "neutral";

/// Categories predicted by the emotion head, in output index order. Neutral is
/// only used for ranker training.
inline constexpr std::array<std::string_view, 4> kModelEmotions = {"happy", "sad", "angry",
                                                                   "surprise"};

inline bool is_known_emotion(std::string_view label) {
  if (label == kNeutral) return true;
  for (auto e : kModelEmotions) {
    if (e == label) return true;
  }
  return false;
}

/// Index into kModelEmotions, or -1 for neutral/unknown.
inline int emotion_index(std::string_view label) {
  for (std::size_t i = 0; i < kModelEmotions.size(); ++i) {
    if (kModelEmotions[i] == label) return static_cast<int>(i);
  }
  return -1;
}

struct UtteranceRecord {
  std::string utterance_id;
  std::string wav_path;
  std::string dataset_id;
  std::string emotion;
  std::optional<double> strength;

  bool is_neutral() const { return emotion == kNeutral; }
};

struct CorpusManifest {
  std::vector<UtteranceRecord> records;
  /// Directory relative wav paths are resolved against.
  std::filesystem::path base_dir;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  std::filesystem::path resolve_wav(const UtteranceRecord& r) const {
    std::filesystem::path p(r.wav_path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
};

inline void validate_manifest(const CorpusManifest& m) {
  std::set<std::string_view> ids;
  for (const auto& r : m.records) {
    require(!r.utterance_id.empty(), ErrorCode::kParseError, "empty utterance_id");
    require(ids.insert(r.utterance_id).second, ErrorCode::kParseError,
            "duplicate utterance_id " + r.utterance_id);
    require(!r.dataset_id.empty(), ErrorCode::kParseError,
            "empty dataset_id for " + r.utterance_id);
    require(is_known_emotion(r.emotion), ErrorCode::kParseError,
            "unknown emotion '" + r.emotion + "' for " + r.utterance_id);
    if (r.strength) {
      require(*r.strength >= 0.0 && *r.strength <= 1.0, ErrorCode::kParseError,
              "strength outside [0,1] for " + r.utterance_id);
    }
  }
}

namespace detail {

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view text, const std::string& context) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorCode::kParseError, "bad number '" + std::string(text) + "' in " + context);
  }
  return v;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace detail

inline constexpr std::string_view kManifestHeader =
    "utterance_id\twav_path\tdataset_id\temotion\tstrength";

inline CorpusManifest parse_manifest(std::string_view text, std::filesystem::path base_dir = {}) {
  CorpusManifest m;
  m.base_dir = std::move(base_dir);
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kParseError, "manifest is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) fail(ErrorCode::kParseError, "unexpected manifest header: " + line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = detail::split_tabs(line);
    if (cols.size() != 5) {
      fail(ErrorCode::kParseError, "manifest line " + std::to_string(line_no) + " has " +
                                       std::to_string(cols.size()) + " columns, expected 5");
    }
    UtteranceRecord r{cols[0], cols[1], cols[2], cols[3], std::nullopt};
    if (!cols[4].empty()) {
      r.strength = detail::parse_double(cols[4], "manifest line " + std::to_string(line_no));
    }
    m.records.push_back(std::move(r));
  }
  validate_manifest(m);
  return m;
}

inline CorpusManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(io::read_file(path), path.parent_path());
}

inline std::string format_manifest(const CorpusManifest& m) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& r : m.records) {
    out += r.utterance_id + '\t' + r.wav_path + '\t' + r.dataset_id + '\t' + r.emotion + '\t';
    if (r.strength) out += detail::format_fixed(*r.strength, 6);
    out += '\n';
  }
  return out;
}

/// Writes the manifest; relative wav paths are rewritten relative to the new
/// location so the file stays loadable from anywhere.
inline void write_manifest(const std::filesystem::path& path, const CorpusManifest& m) {
  CorpusManifest copy = m;
  const auto dest_dir = std::filesystem::absolute(path).parent_path();
  for (auto& r : copy.records) {
    if (std::filesystem::path(r.wav_path).is_absolute()) continue;
    r.wav_path = std::filesystem::relative(std::filesystem::absolute(m.resolve_wav(r)), dest_dir).string();
  }
  io::write_file(path, format_manifest(copy));
}

}  // namespace strengthnet
