#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>

#include "strengthnet/common/error.hpp"
#include "strengthnet/common/random.hpp"
#include "strengthnet/pipeline/feature_cache.hpp"
#include "strengthnet/pipeline/manifest.hpp"
#include "strengthnet/rank/ranker.hpp"

namespace strengthnet::pipeline {

/// Rankers keyed by (dataset_id, emotion); emotion is rank::kPooledEmotion
/// for a pooled ranker.
using RankerSet = std::map<std::pair<std::string, std::string>, rank::RankingModel>;

struct RankerTrainingOptions {
  rank::RankerOptions solver;
  rank::PairLimits limits;
  bool pooled = false;
  std::uint64_t seed = 0;
};

/// One ranker per (dataset, emotion) found in `manifest`, or one pooled
/// ranker per dataset.
inline RankerSet train_rankers(const CorpusManifest& manifest, const FunctionalMap& features,
                               const RankerTrainingOptions& opt = {}) {
  require(!manifest.empty(), ErrorCode::kEmptyManifest, "no utterances to train rankers on");
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& r : manifest.records) {
    if (r.is_neutral()) continue;
    keys.insert({r.dataset_id, opt.pooled ? std::string(rank::kPooledEmotion) : r.emotion});
  }
  RankerSet out;
  for (const auto& [dataset, emotion] : keys) {
    const auto pairs = rank::build_pair_sets(manifest, features, emotion, dataset, opt.limits,
                                             mix_seed({opt.seed, stable_hash(dataset), stable_hash(emotion)}));
    out.emplace(std::pair{dataset, emotion}, rank::train_ranker(pairs, opt.solver).model);
  }
  return out;
}

inline const rank::RankingModel& find_ranker(const RankerSet& rankers, const UtteranceRecord& r) {
  if (auto it = rankers.find({r.dataset_id, r.emotion}); it != rankers.end()) return it->second;
  if (auto it = rankers.find({r.dataset_id, std::string(rank::kPooledEmotion)}); it != rankers.end()) {
    return it->second;
  }
  fail(ErrorCode::kMissingRanker, "no ranker for dataset '" + r.dataset_id + "' emotion '" + r.emotion + "'");
}

/// Fills `strength` for every emotional utterance with its ranker's
/// normalized score. Neutral utterances keep an empty strength; they are
/// excluded from model training.
inline CorpusManifest derive_ground_truth(const CorpusManifest& manifest, const FunctionalMap& features,
                                          const RankerSet& rankers) {
  CorpusManifest out = manifest;
  for (auto& r : out.records) {
    if (r.is_neutral()) {
      r.strength.reset();
      continue;
    }
    const auto& model = find_ranker(rankers, r);
    auto it = features.find(r.utterance_id);
    if (it == features.end()) fail(ErrorCode::kMissingFeature, "no features for " + r.utterance_id);
    r.strength = rank::score(model, it->second);
  }
  return out;
}

inline std::string ranker_filename(const rank::RankingModel& m) { return m.dataset_id + "." + m.emotion + ".rank"; }

inline void save_rankers(const std::filesystem::path& dir, const RankerSet& rankers) {
  std::filesystem::create_directories(dir);
  for (const auto& [key, model] : rankers) rank::save_ranking_model(dir / ranker_filename(model), model);
}

/// Loads every *.rank file in `dir`, keyed by the dataset and emotion stored
/// inside the file.
inline RankerSet load_rankers(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::kIoError, "not a directory: " + dir.string());
  RankerSet out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".rank") continue;
    auto model = rank::load_ranking_model(entry.path());
    auto key = std::pair{model.dataset_id, model.emotion};
    out.insert_or_assign(std::move(key), std::move(model));
  }
  return out;
}

}  // namespace strengthnet::pipeline
