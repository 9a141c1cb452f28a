#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "strengthnet/audio/features.hpp"
#include "strengthnet/common/binary_io.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/common/random.hpp"
#include "strengthnet/pipeline/manifest.hpp"

namespace strengthnet::rank {

/// Emotion label that selects the pooled ranker (all emotions vs neutral).
inline constexpr std::string_view kPooledEmotion = "all";

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct IndexPair {
  std::size_t first;
  std::size_t second;
  friend bool operator==(const IndexPair&, const IndexPair&) = default;
};

/// Ordered pairs (stronger, weaker) and similar pairs over the rows of
/// `features`. `utterance_ids[i]` names row i.
struct PairSets {
  std::vector<IndexPair> ordered;
  std::vector<IndexPair> similar;
  FeatureMatrix features;
  std::vector<std::string> utterance_ids;
  /// Labels copied into the trained RankingModel.
  std::string emotion;
  std::string dataset_id;
};

struct PairLimits {
  std::size_t max_ordered = 5000;
  std::size_t max_similar = 5000;
};

inline void validate_pair_sets(const PairSets& p) {
  const auto m = static_cast<std::size_t>(p.features.rows());
  auto key = [](IndexPair q) { return std::pair<std::size_t, std::size_t>(std::minmax(q.first, q.second)); };
  std::set<std::pair<std::size_t, std::size_t>> ordered_keys;
  for (auto q : p.ordered) {
    require(q.first < m && q.second < m, ErrorCode::kOutOfRange, "ordered pair index out of range");
    require(q.first != q.second, ErrorCode::kInvalidArgument, "ordered pair (i,i)");
    ordered_keys.insert(key(q));
  }
  for (auto q : p.similar) {
    require(q.first < m && q.second < m, ErrorCode::kOutOfRange, "similar pair index out of range");
    require(!ordered_keys.contains(key(q)), ErrorCode::kInvalidArgument,
            "pair appears in both ordered and similar sets");
  }
}

/// Builds O and S for one (dataset, emotion) ranker. Ordered pairs are
/// (emotional, neutral); similar pairs join two utterances of the same
/// category. Both sets are shuffled with `seed` and truncated to the limits.
/// With emotion == kPooledEmotion every non-neutral utterance counts as
/// emotional and similar pairs stay within a single category.
inline PairSets build_pair_sets(const CorpusManifest& manifest,
                                const std::map<std::string, audio::UtteranceFeatureVector>& features,
                                std::string_view emotion, std::string_view dataset_id,
                                PairLimits limits = {}, std::uint64_t seed = 0) {
  const bool pooled = emotion == kPooledEmotion;
  std::vector<const UtteranceRecord*> neutral, emotional;
  for (const auto& r : manifest.records) {
    if (r.dataset_id != dataset_id) continue;
    if (r.is_neutral()) {
      neutral.push_back(&r);
    } else if (pooled || r.emotion == emotion) {
      emotional.push_back(&r);
    }
  }
  if (neutral.empty() || emotional.size() < 2) {
    fail(ErrorCode::kInsufficientData,
         "dataset '" + std::string(dataset_id) + "' emotion '" + std::string(emotion) + "' has " +
             std::to_string(neutral.size()) + " neutral and " + std::to_string(emotional.size()) +
             " emotional utterances (need >=1 and >=2)");
  }

  PairSets sets;
  sets.emotion = std::string(emotion);
  sets.dataset_id = std::string(dataset_id);
  std::vector<const UtteranceRecord*> rows;
  rows.insert(rows.end(), neutral.begin(), neutral.end());
  rows.insert(rows.end(), emotional.begin(), emotional.end());
  std::size_t dim = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto it = features.find(rows[i]->utterance_id);
    if (it == features.end()) {
      fail(ErrorCode::kMissingFeature, "no features for " + rows[i]->utterance_id);
    }
    if (i == 0) {
      dim = it->second.dim();
      sets.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    }
    require(it->second.dim() == dim, ErrorCode::kDimensionMismatch,
            "feature dimension differs for " + rows[i]->utterance_id);
    for (std::size_t d = 0; d < dim; ++d) {
      sets.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = it->second.values[d];
    }
    sets.utterance_ids.push_back(rows[i]->utterance_id);
  }

  const std::size_t n_neutral = neutral.size();
  for (std::size_t e = 0; e < emotional.size(); ++e) {
    for (std::size_t n = 0; n < n_neutral; ++n) sets.ordered.push_back({n_neutral + e, n});
  }
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      if (rows[a]->emotion == rows[b]->emotion) sets.similar.push_back({a, b});
    }
  }

  Rng rng(mix_seed({seed, 0x52414e4bull}));
  shuffle(std::span(sets.ordered), rng);
  shuffle(std::span(sets.similar), rng);
  if (sets.ordered.size() > limits.max_ordered) sets.ordered.resize(limits.max_ordered);
  if (sets.similar.size() > limits.max_similar) sets.similar.resize(limits.max_similar);
  return sets;
}

/// Linear ranking function w.x plus the raw-score range seen in training.
struct RankingModel {
  std::vector<double> w;
  double score_min = 0.0;
  double score_max = 1.0;
  std::string emotion;
  std::string dataset_id;
};

struct RankerOptions {
  double C = 1.0;
  int max_iterations = 2000;
  double relative_tolerance = 1e-8;
  /// z-score features with the training rows' statistics before solving.
  bool standardize = true;
};

struct RankerFit {
  RankingModel model;
  bool converged = false;
  int iterations = 0;
  /// Objective after each accepted iteration, starting with f(0).
  std::vector<double> objective_history;
};

/// Squared-hinge relative-attributes objective over difference vectors:
///   1/2 |w|^2 + C * ( sum_O max(0, 1 - w.d)^2 + sum_S (w.d)^2 )
/// Margins are evaluated through per-row projections s = X w.
class RankObjective {
 public:
  RankObjective(const FeatureMatrix& x, std::span<const IndexPair> ordered,
                std::span<const IndexPair> similar, double C)
      : x_(x), ordered_(ordered), similar_(similar), C_(C) {}

  double value(const Eigen::VectorXd& w) const {
    const Eigen::VectorXd s = x_ * w;
    double slack = 0.0;
    for (auto p : ordered_) {
      const double h = std::max(0.0, 1.0 - (s[p.first] - s[p.second]));
      slack += h * h;
    }
    for (auto p : similar_) {
      const double d = s[p.first] - s[p.second];
      slack += d * d;
    }
    return 0.5 * w.squaredNorm() + C_ * slack;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const {
    const Eigen::VectorXd s = x_ * w;
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(x_.rows());
    for (auto p : ordered_) {
      const double h = 1.0 - (s[p.first] - s[p.second]);
      if (h > 0.0) {
        coef[p.first] -= 2.0 * C_ * h;
        coef[p.second] += 2.0 * C_ * h;
      }
    }
    for (auto p : similar_) {
      const double d = s[p.first] - s[p.second];
      coef[p.first] += 2.0 * C_ * d;
      coef[p.second] -= 2.0 * C_ * d;
    }
    return w + x_.transpose() * coef;
  }

 private:
  const FeatureMatrix& x_;
  std::span<const IndexPair> ordered_;
  std::span<const IndexPair> similar_;
  double C_;
};

/// Objective of `w` (raw feature space, no standardization) on `pairs`.
inline double rank_objective(const PairSets& pairs, std::span<const double> w, double C) {
  Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
  return RankObjective(pairs.features, pairs.ordered, pairs.similar, C).value(wv);
}

/// Primal rank-SVM by full-batch gradient descent. Each step starts from a
/// Barzilai-Borwein step length and backtracks until the Armijo condition
/// holds, so the objective never increases.
inline RankerFit train_ranker(const PairSets& pairs, const RankerOptions& opt = {}) {
  require(!pairs.ordered.empty(), ErrorCode::kInsufficientData, "ordered pair set is empty");
  require(opt.C > 0.0, ErrorCode::kInvalidArgument, "C must be positive");
  validate_pair_sets(pairs);
  const auto rows = pairs.features.rows();
  const auto dim = pairs.features.cols();
  require(rows >= 1 && dim >= 1, ErrorCode::kInsufficientData, "empty feature matrix");

  Eigen::RowVectorXd mean = pairs.features.colwise().mean();
  Eigen::RowVectorXd scale = Eigen::RowVectorXd::Ones(dim);
  bool any_variation = false;
  for (Eigen::Index d = 0; d < dim; ++d) {
    const double sd =
        std::sqrt((pairs.features.col(d).array() - mean[d]).square().sum() / static_cast<double>(rows));
    if (sd > 1e-12 * std::max(1.0, std::abs(mean[d]))) {
      any_variation = true;
      if (opt.standardize) scale[d] = sd;
    } else {
      scale[d] = 0.0;  // constant column carries no ranking information
    }
  }
  if (!any_variation) fail(ErrorCode::kDegenerateFeatures, "all feature vectors are identical");
  if (!opt.standardize) mean.setZero();

  FeatureMatrix z(rows, dim);
  for (Eigen::Index d = 0; d < dim; ++d) {
    if (scale[d] == 0.0) {
      z.col(d).setZero();
    } else {
      z.col(d) = (pairs.features.col(d).array() - mean[d]) / scale[d];
    }
  }

  const RankObjective objective(z, pairs.ordered, pairs.similar, opt.C);
  RankerFit fit;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd g = objective.gradient(w);
  double f = objective.value(w);
  fit.objective_history.push_back(f);
  double step = 1.0 / (1.0 + 2.0 * opt.C * static_cast<double>(pairs.ordered.size()));
  Eigen::VectorXd prev_w, prev_g;

  for (int it = 0; it < opt.max_iterations; ++it) {
    if (it > 0) {
      const Eigen::VectorXd sw = w - prev_w;
      const Eigen::VectorXd sg = g - prev_g;
      const double denom = sw.dot(sg);
      if (denom > 0.0) step = sw.squaredNorm() / denom;
    }
    const double g_sq = g.squaredNorm();
    if (g_sq == 0.0) {
      fit.converged = true;
      break;
    }
    double f_new = f;
    Eigen::VectorXd w_new;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      w_new = w - step * g;
      f_new = objective.value(w_new);
      if (f_new <= f - 0.5 * step * g_sq) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || f_new >= f) {
      fit.converged = true;  // no representable descent left
      break;
    }
    prev_w = w;
    prev_g = g;
    w = w_new;
    g = objective.gradient(w);
    const double decrease = (f - f_new) / std::max(std::abs(f), 1e-300);
    f = f_new;
    fit.objective_history.push_back(f);
    fit.iterations = it + 1;
    if (decrease < opt.relative_tolerance) {
      fit.converged = true;
      break;
    }
  }

  RankingModel& model = fit.model;
  model.emotion = pairs.emotion;
  model.dataset_id = pairs.dataset_id;
  model.w.assign(static_cast<std::size_t>(dim), 0.0);
  for (Eigen::Index d = 0; d < dim; ++d) {
    if (scale[d] != 0.0) model.w[static_cast<std::size_t>(d)] = w[d] / scale[d];
  }
  Eigen::Map<const Eigen::VectorXd> w_raw(model.w.data(), dim);
  const Eigen::VectorXd raw = pairs.features * w_raw;
  model.score_min = raw.minCoeff();
  model.score_max = raw.maxCoeff();
  if (!(model.score_max > model.score_min)) {
    fail(ErrorCode::kDegenerateFeatures, "ranker assigns identical scores to all training rows");
  }
  return fit;
}

inline double raw_score(const RankingModel& model, std::span<const double> x) {
  if (x.size() != model.w.size()) {
    fail(ErrorCode::kDimensionMismatch, "feature dimension " + std::to_string(x.size()) +
                                            " vs ranker dimension " + std::to_string(model.w.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += model.w[i] * x[i];
  return s;
}

/// Strength in [0, 1]: the raw score mapped linearly onto the training range
/// and clamped.
inline double score(const RankingModel& model, std::span<const double> x) {
  const double v = (raw_score(model, x) - model.score_min) / (model.score_max - model.score_min);
  return std::clamp(v, 0.0, 1.0);
}

inline double score(const RankingModel& model, const audio::UtteranceFeatureVector& x) {
  return score(model, std::span<const double>(x.values));
}

// ---- persistence -----------------------------------------------------------

inline constexpr std::uint32_t kRankFileVersion = 1;

inline std::string encode_ranking_model(const RankingModel& m) {
  io::ByteWriter w;
  w.put_magic("RANK");
  w.put(kRankFileVersion);
  w.put_string(m.emotion);
  w.put_string(m.dataset_id);
  w.put(static_cast<std::uint32_t>(m.w.size()));
  w.put_span(std::span<const double>(m.w));
  w.put(m.score_min);
  w.put(m.score_max);
  return w.take();
}

inline RankingModel decode_ranking_model(std::string_view bytes) {
  io::ByteReader r(bytes, ErrorCode::kParseError);
  if (!r.magic_matches("RANK")) fail(ErrorCode::kParseError, "bad ranking model magic");
  if (r.get<std::uint32_t>() != kRankFileVersion) fail(ErrorCode::kVersionMismatch, "ranking model version");
  RankingModel m;
  m.emotion = r.get_string();
  m.dataset_id = r.get_string();
  m.w = r.get_vector<double>(r.get<std::uint32_t>());
  m.score_min = r.get<double>();
  m.score_max = r.get<double>();
  if (!r.at_end()) fail(ErrorCode::kParseError, "trailing bytes in ranking model");
  return m;
}

inline void save_ranking_model(const std::filesystem::path& path, const RankingModel& m) {
  io::write_file(path, encode_ranking_model(m));
}

inline RankingModel load_ranking_model(const std::filesystem::path& path) {
  return decode_ranking_model(io::read_file(path));
}

struct ScoreRow {
  std::string utterance_id;
  std::string emotion;
  double strength;
};

/// TSV: utterance_id, emotion, strength with 6 decimals; no header.
inline std::string format_score_table(std::span<const ScoreRow> rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.utterance_id + '\t' + r.emotion + '\t' + detail::format_fixed(r.strength, 6) + '\n';
  }
  return out;
}

}  // namespace strengthnet::rank
