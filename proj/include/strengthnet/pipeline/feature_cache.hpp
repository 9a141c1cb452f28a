#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "strengthnet/audio/features.hpp"
#include "strengthnet/audio/mel.hpp"
#include "strengthnet/audio/wav.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/pipeline/manifest.hpp"

namespace strengthnet::pipeline {

using MelMap = std::map<std::string, audio::MelSpectrogram>;
using FunctionalMap = std::map<std::string, audio::UtteranceFeatureVector>;

/// Log-mel spectrograms and utterance functionals for a whole manifest.
struct CorpusFeatures {
  MelMap mels;
  FunctionalMap functionals;
};

inline CorpusFeatures compute_features(const CorpusManifest& manifest,
                                       audio::FeatureSet set = audio::FeatureSet::kFull) {
  require(!manifest.empty(), ErrorCode::kEmptyManifest, "manifest has no utterances");
  CorpusFeatures out;
  for (const auto& r : manifest.records) {
    auto clip = audio::load_wav(manifest.resolve_wav(r));
    clip.utterance_id = r.utterance_id;
    auto mel = audio::mel_spectrogram(clip);
    out.functionals.emplace(r.utterance_id, audio::functional_features(mel, set));
    out.mels.emplace(r.utterance_id, std::move(mel));
  }
  return out;
}

inline std::filesystem::path mel_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / (id + ".melf");
}
inline std::filesystem::path functional_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / (id + ".func");
}

/// Writes <id>.melf and <id>.func for every utterance under `dir`.
inline void save_features(const std::filesystem::path& dir, const CorpusFeatures& features) {
  std::filesystem::create_directories(dir);
  for (const auto& [id, mel] : features.mels) audio::save_mel(mel_path(dir, id), mel);
  for (const auto& [id, fv] : features.functionals) audio::save_features(functional_path(dir, id), fv);
}

namespace detail {

template <class Map, class Loader>
Map load_each(const CorpusManifest& manifest, const std::filesystem::path& dir, Loader load,
              std::filesystem::path (*path_of)(const std::filesystem::path&, const std::string&)) {
  Map out;
  for (const auto& r : manifest.records) {
    const auto p = path_of(dir, r.utterance_id);
    if (!std::filesystem::exists(p)) {
      fail(ErrorCode::kMissingFeature, "no cached features for " + r.utterance_id + " at " + p.string());
    }
    out.emplace(r.utterance_id, load(p));
  }
  return out;
}

}  // namespace detail

inline MelMap load_mels(const CorpusManifest& manifest, const std::filesystem::path& dir) {
  return detail::load_each<MelMap>(
      manifest, dir, [](const std::filesystem::path& p) { return audio::load_mel(p); }, &mel_path);
}

inline FunctionalMap load_functionals(const CorpusManifest& manifest, const std::filesystem::path& dir) {
  return detail::load_each<FunctionalMap>(
      manifest, dir, [](const std::filesystem::path& p) { return audio::load_features(p); }, &functional_path);
}

}  // namespace strengthnet::pipeline
