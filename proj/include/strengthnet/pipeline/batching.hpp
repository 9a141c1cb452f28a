#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "strengthnet/audio/mel.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/common/random.hpp"
#include "strengthnet/pipeline/feature_cache.hpp"
#include "strengthnet/pipeline/manifest.hpp"

namespace strengthnet::pipeline {

/// One labelled utterance ready for the model. `mel` points into a map the
/// caller keeps alive.
struct Example {
  std::string utterance_id;
  std::string dataset_id;
  const audio::MelSpectrogram* mel = nullptr;
  float strength = 0.0f;
  std::size_t emotion = 0;
};

/// Examples for every emotional utterance of `manifest`; neutral ones are
/// skipped. Strength labels must be present.
inline std::vector<Example> make_examples(const CorpusManifest& manifest, const MelMap& mels) {
  std::vector<Example> out;
  for (const auto& r : manifest.records) {
    if (r.is_neutral()) continue;
    auto it = mels.find(r.utterance_id);
    if (it == mels.end()) fail(ErrorCode::kMissingFeature, "no mel spectrogram for " + r.utterance_id);
    require(r.strength.has_value(), ErrorCode::kInvalidArgument, "utterance " + r.utterance_id + " has no strength");
    Example e;
    e.utterance_id = r.utterance_id;
    e.dataset_id = r.dataset_id;
    e.mel = &it->second;
    e.strength = static_cast<float>(*r.strength);
    e.emotion = static_cast<std::size_t>(emotion_index(r.emotion));
    out.push_back(std::move(e));
  }
  return out;
}

/// Zero-padded batch. mel is [B, max_frames, channels]; mask is
/// [B, max_frames] with 1 on real frames.
struct Batch {
  std::size_t size = 0;
  std::size_t max_frames = 0;
  std::size_t channels = 0;
  std::vector<float> mel;
  std::vector<float> mask;
  std::vector<float> strength;
  std::vector<std::size_t> emotion;
  std::vector<std::size_t> lengths;
  std::vector<std::string> utterance_ids;

  std::span<const float> row_mel(std::size_t b) const {
    return {mel.data() + b * max_frames * channels, lengths[b] * channels};
  }
};

inline Batch collate(std::span<const Example* const> rows) {
  require(!rows.empty(), ErrorCode::kEmpty, "cannot collate an empty batch");
  Batch b;
  b.size = rows.size();
  b.channels = rows.front()->mel->num_channels;
  for (const auto* e : rows) {
    require(e->mel->num_channels == b.channels, ErrorCode::kShapeMismatch, "mixed channel counts in batch");
    b.max_frames = std::max(b.max_frames, e->mel->num_frames);
  }
  b.mel.assign(b.size * b.max_frames * b.channels, 0.0f);
  b.mask.assign(b.size * b.max_frames, 0.0f);
  for (std::size_t i = 0; i < b.size; ++i) {
    const auto* e = rows[i];
    std::copy(e->mel->frames.begin(), e->mel->frames.end(), b.mel.begin() + i * b.max_frames * b.channels);
    std::fill_n(b.mask.begin() + i * b.max_frames, e->mel->num_frames, 1.0f);
    b.strength.push_back(e->strength);
    b.emotion.push_back(e->emotion);
    b.lengths.push_back(e->mel->num_frames);
    b.utterance_ids.push_back(e->utterance_id);
  }
  return b;
}

/// Shuffles with `seed`, sorts by length inside windows of
/// `bucket_batches * batch_size` to limit padding, then cuts consecutive
/// batches. Every example lands in exactly one batch; only the last batch
/// may be short.
inline std::vector<Batch> make_batches(std::span<const Example> examples, std::size_t batch_size,
                                       std::uint64_t seed, std::size_t bucket_batches = 4) {
  require(batch_size > 0, ErrorCode::kInvalidArgument, "batch_size must be positive");
  std::vector<const Example*> order;
  for (const auto& e : examples) order.push_back(&e);
  Rng rng(seed);
  shuffle(std::span(order), rng);
  const std::size_t window = batch_size * std::max<std::size_t>(bucket_batches, 1);
  for (std::size_t start = 0; start < order.size(); start += window) {
    const auto end = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + window));
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start), end,
                     [](const Example* a, const Example* b) { return a->mel->num_frames < b->mel->num_frames; });
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    batches.push_back(collate(std::span<const Example* const>(order.data() + start, n)));
  }
  return batches;
}

}  // namespace strengthnet::pipeline
