#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "strengthnet/audio/mel.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/eval/report.hpp"
#include "strengthnet/model/checkpoint.hpp"
#include "strengthnet/model/strengthnet.hpp"
#include "strengthnet/pipeline/batching.hpp"
#include "strengthnet/pipeline/config.hpp"
#include "strengthnet/pipeline/feature_cache.hpp"
#include "strengthnet/pipeline/manifest.hpp"
#include "strengthnet/pipeline/trainer.hpp"

namespace strengthnet::pipeline {

/// Per-channel statistics over the mels of every utterance in `subset`.
inline audio::NormStats fit_norm_stats(const MelMap& mels, const CorpusManifest& subset) {
  std::vector<audio::MelSpectrogram> specs;
  for (const auto& r : subset.records) {
    auto it = mels.find(r.utterance_id);
    if (it == mels.end()) fail(ErrorCode::kMissingFeature, "no mel spectrogram for " + r.utterance_id);
    specs.push_back(it->second);
  }
  return audio::compute_norm_stats(specs);
}

inline MelMap normalize_mels(const MelMap& mels, const audio::NormStats& stats) {
  MelMap out;
  for (const auto& [id, m] : mels) out.emplace(id, audio::apply_norm_stats(m, stats));
  return out;
}

struct TrainedModel {
  model::Checkpoint checkpoint;
  FitResult fit;
};

/// Normalization statistics from the training split, fresh parameters from
/// the training seed, then `fit`. The returned checkpoint holds the best
/// epoch's parameters and the statistics.
inline TrainedModel train_model(const RunConfig& cfg, const CorpusManifest& train, const CorpusManifest& val,
                                const MelMap& raw_mels,
                                const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  const auto stats = fit_norm_stats(raw_mels, train);
  const auto normalized = normalize_mels(raw_mels, stats);
  const auto train_examples = make_examples(train, normalized);
  const auto val_examples = make_examples(val, normalized);
  auto fit_result = fit(cfg.model, cfg.training, train_examples, val_examples,
                        model::init_parameters(cfg.model, cfg.training.seed), on_epoch);
  TrainedModel out;
  out.checkpoint.config = cfg.model;
  out.checkpoint.params = fit_result.params;
  out.checkpoint.norm_stats = stats;
  out.fit = std::move(fit_result);
  return out;
}

/// Scores every utterance of `manifest` (neutral ones included) with a
/// frozen checkpoint.
inline std::vector<eval::PredictionRow> infer(const model::Checkpoint& ck, const CorpusManifest& manifest,
                                              const MelMap& raw_mels) {
  require(!manifest.empty(), ErrorCode::kEmptyManifest, "manifest has no utterances");
  std::vector<eval::PredictionRow> rows;
  for (const auto& r : manifest.records) {
    auto it = raw_mels.find(r.utterance_id);
    if (it == raw_mels.end()) fail(ErrorCode::kMissingFeature, "no mel spectrogram for " + r.utterance_id);
    const auto mel = ck.norm_stats ? audio::apply_norm_stats(it->second, *ck.norm_stats) : it->second;
    const auto out = model::predict(ck.config, ck.params, mel);
    eval::PredictionRow p;
    p.utterance_id = r.utterance_id;
    p.dataset_id = r.dataset_id;
    p.strength = out.utterance_score;
    p.emotion = std::string(kModelEmotions.at(out.predicted_emotion()));
    p.emotion_probs.assign(out.emotion_probs.begin(), out.emotion_probs.end());
    rows.push_back(std::move(p));
  }
  return rows;
}

/// Joins predictions with the reference manifest. Only utterances with a
/// reference strength are kept. Categories come from `category_source`
/// (id -> strength) when given, else from the reference strength.
inline std::vector<eval::EvalRow> join_for_evaluation(
    std::span<const eval::PredictionRow> predictions, const CorpusManifest& truth,
    const std::map<std::string, double>* category_source = nullptr) {
  std::map<std::string, const eval::PredictionRow*> by_id;
  for (const auto& p : predictions) by_id[p.utterance_id] = &p;
  std::vector<eval::EvalRow> rows;
  for (const auto& r : truth.records) {
    if (!r.strength || r.is_neutral()) continue;
    auto it = by_id.find(r.utterance_id);
    if (it == by_id.end()) fail(ErrorCode::kLengthMismatch, "no prediction for " + r.utterance_id);
    eval::EvalRow e;
    e.utterance_id = r.utterance_id;
    e.dataset_id = r.dataset_id;
    e.predicted = it->second->strength;
    e.emotion_probs = it->second->emotion_probs;
    e.truth = *r.strength;
    e.emotion = static_cast<std::size_t>(emotion_index(r.emotion));
    double reference = *r.strength;
    if (category_source) {
      auto c = category_source->find(r.utterance_id);
      if (c == category_source->end()) fail(ErrorCode::kLengthMismatch, "no category for " + r.utterance_id);
      reference = c->second;
    }
    e.reference_category = eval::strength_category(reference);
    rows.push_back(std::move(e));
  }
  return rows;
}

}  // namespace strengthnet::pipeline
