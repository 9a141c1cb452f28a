#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "strengthnet/common/error.hpp"
#include "strengthnet/common/random.hpp"
#include "strengthnet/pipeline/config.hpp"
#include "strengthnet/pipeline/manifest.hpp"

namespace strengthnet::pipeline {

/// Concatenates corpora. Relative wav paths are resolved against each
/// source's base directory so the result is self-contained.
inline CorpusManifest fuse(std::span<const CorpusManifest> corpora) {
  CorpusManifest out;
  for (const auto& m : corpora) {
    for (const auto& r : m.records) {
      auto copy = r;
      copy.wav_path = m.resolve_wav(r).string();
      out.records.push_back(std::move(copy));
    }
  }
  validate_manifest(out);
  return out;
}

struct Splits {
  CorpusManifest train;
  CorpusManifest val;
  CorpusManifest test;
};

/// Stratified split. Each (dataset, emotion) stratum is ordered by id,
/// shuffled with a seed derived from the run seed and the stratum key, then
/// cut by the ratio. Membership therefore depends only on the stratum's own
/// contents, so a dataset splits identically alone or fused with others.
inline Splits split_corpus(const CorpusManifest& corpus, SplitRatio ratio, std::uint64_t seed) {
  require(!corpus.empty(), ErrorCode::kEmptyManifest, "cannot split an empty corpus");
  require(ratio.total() > 0, ErrorCode::kInvalidArgument, "split ratio sums to zero");
  std::map<std::pair<std::string, std::string>, std::vector<const UtteranceRecord*>> strata;
  for (const auto& r : corpus.records) strata[{r.dataset_id, r.emotion}].push_back(&r);

  Splits out;
  for (auto* part : {&out.train, &out.val, &out.test}) part->base_dir = corpus.base_dir;
  for (auto& [key, members] : strata) {
    std::sort(members.begin(), members.end(),
              [](const UtteranceRecord* a, const UtteranceRecord* b) { return a->utterance_id < b->utterance_id; });
    Rng rng(mix_seed({seed, stable_hash(key.first), stable_hash(key.second)}));
    shuffle(std::span(members), rng);
    const double n = static_cast<double>(members.size());
    const double total = static_cast<double>(ratio.total());
    auto n_val = static_cast<std::size_t>(std::lround(n * static_cast<double>(ratio.val) / total));
    auto n_test = static_cast<std::size_t>(std::lround(n * static_cast<double>(ratio.test) / total));
    n_val = std::min(n_val, members.size());
    n_test = std::min(n_test, members.size() - n_val);
    const std::size_t n_train = members.size() - n_val - n_test;
    for (std::size_t i = 0; i < members.size(); ++i) {
      auto& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
      dst.records.push_back(*members[i]);
    }
  }
  return out;
}

}  // namespace strengthnet::pipeline
