#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "strengthnet/autodiff/adam.hpp"
#include "strengthnet/autodiff/tape.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/common/random.hpp"
#include "strengthnet/model/config.hpp"
#include "strengthnet/model/strengthnet.hpp"
#include "strengthnet/pipeline/batching.hpp"
#include "strengthnet/pipeline/config.hpp"

namespace strengthnet::pipeline {

/// One line of the training log.
struct EpochRecord {
  std::size_t epoch = 0;
  double l_f_str = 0.0;
  double l_u_str = 0.0;
  double l_cat = 0.0;
  double l_total = 0.0;
  double val_mae = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

inline std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["l_f_str"] = r.l_f_str;
  j["l_u_str"] = r.l_u_str;
  j["l_cat"] = r.l_cat;
  j["l_total"] = r.l_total;
  j["val_mae"] = r.val_mae;
  j["val_acc"] = r.val_acc;
  j["seconds"] = r.seconds;
  return j.dump();
}

/// Tracks the best validation value; a value counts as better only if it is
/// strictly lower. Epochs are numbered from 1.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true if `value` is a new best.
  bool update(std::size_t epoch, double value) {
    last_epoch_ = epoch;
    if (value < best_) {
      best_ = value;
      best_epoch_ = epoch;
      return true;
    }
    return false;
  }

  bool should_stop() const { return best_epoch_ > 0 && last_epoch_ - best_epoch_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t last_epoch_ = 0;
};

/// Loss components averaged over the rows they were computed on.
struct LossBreakdown {
  double frame = 0.0;
  double utterance = 0.0;
  double category = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    frame += o.frame;
    utterance += o.utterance;
    category += o.category;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double s) const { return {frame * s, utterance * s, category * s, total * s}; }
};

namespace detail {

using GradList = std::vector<std::vector<float>>;

inline GradList zero_grads(const model::ParameterSet& params) {
  GradList g;
  for (const auto& t : params.tensors) g.emplace_back(t.size(), 0.0f);
  return g;
}

/// Forward and backward for one unpadded utterance; adds its gradient to `acc`.
inline LossBreakdown row_gradient(const model::StrengthNetConfig& cfg, const model::ParameterSet& params,
                                  std::span<const float> mel, std::size_t frames, float strength,
                                  std::size_t emotion, std::uint64_t dropout_seed, GradList& acc) {
  ad::Tape<float> tape;
  std::vector<ad::Var<float>> leaves;
  const auto bound = model::bind_parameters(tape, params, true, &leaves);
  auto x = tape.constant({frames, cfg.mel_channels}, std::vector<float>(mel.begin(), mel.end()));
  const std::vector<float> mask(frames, 1.0f);
  std::vector<float> one_hot(cfg.num_emotions, 0.0f);
  one_hot.at(emotion) = 1.0f;
  const auto out = model::forward<float>(cfg, bound, x, mask, {true, dropout_seed});
  const auto loss = model::total_loss<float>(out, strength, one_hot, mask);
  tape.backward(loss.total);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const auto g = leaves[i].grad();
    auto& a = acc[i];
    for (std::size_t k = 0; k < g.size(); ++k) a[k] += g[k];
  }
  return {loss.frame.item(), loss.utterance.item(), loss.category.item(), loss.total.item()};
}

}  // namespace detail

/// Mean loss and mean gradient over the rows of `batch`. Row r goes to
/// worker r % workers; worker partial sums are reduced in worker order, so
/// the result does not depend on thread scheduling.
inline LossBreakdown batch_gradient(const model::StrengthNetConfig& cfg, const model::ParameterSet& params,
                                    const Batch& batch, std::uint64_t batch_seed, std::size_t workers,
                                    std::vector<ad::Tensor<float>>& grads) {
  workers = std::max<std::size_t>(1, std::min(workers, batch.size));
  std::vector<detail::GradList> partial(workers);
  std::vector<LossBreakdown> losses(batch.size);
  std::vector<std::exception_ptr> errors(workers);
  auto run = [&](std::size_t w) {
    try {
      partial[w] = detail::zero_grads(params);
      for (std::size_t r = w; r < batch.size; r += workers) {
        try {
          losses[r] = detail::row_gradient(cfg, params, batch.row_mel(r), batch.lengths[r], batch.strength[r],
                                           batch.emotion[r], mix_seed({batch_seed, r}), partial[w]);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNonFiniteValue) throw;
          fail(ErrorCode::kNonFiniteLoss, "non-finite value while training on " + batch.utterance_ids[r] + ": " +
                                              e.what());
        }
        if (!std::isfinite(losses[r].total)) {
          fail(ErrorCode::kNonFiniteLoss, "non-finite loss on " + batch.utterance_ids[r]);
        }
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const float inv = 1.0f / static_cast<float>(batch.size);
  grads.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor<float> g = ad::Tensor<float>::zeros(params.tensors[i].shape);
    for (std::size_t w = 0; w < workers; ++w) {
      const auto& p = partial[w][i];
      for (std::size_t k = 0; k < g.data.size(); ++k) g.data[k] += p[k];
    }
    for (auto& v : g.data) v *= inv;
    grads.push_back(std::move(g));
  }
  LossBreakdown mean;
  for (const auto& l : losses) mean += l;
  return mean.scaled(1.0 / static_cast<double>(batch.size));
}

struct ValidationMetrics {
  double mae = 0.0;
  double accuracy = 0.0;
};

/// Utterance-score MAE and emotion accuracy with dropout off.
inline ValidationMetrics validate_examples(const model::StrengthNetConfig& cfg, const model::ParameterSet& params,
                                           std::span<const Example> examples) {
  require(!examples.empty(), ErrorCode::kEmpty, "no validation examples");
  double abs_err = 0.0;
  std::size_t correct = 0;
  for (const auto& e : examples) {
    const auto out = model::predict(cfg, params, *e.mel);
    abs_err += std::abs(static_cast<double>(out.utterance_score) - static_cast<double>(e.strength));
    if (out.predicted_emotion() == e.emotion) ++correct;
  }
  const auto n = static_cast<double>(examples.size());
  return {abs_err / n, static_cast<double>(correct) / n};
}

struct FitResult {
  /// Parameters from the epoch with the lowest validation MAE.
  model::ParameterSet params;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  std::vector<EpochRecord> history;
};

/// Adam training with early stopping on validation MAE. `on_epoch` sees each
/// log record as soon as it is produced.
inline FitResult fit(const model::StrengthNetConfig& cfg, const TrainingConfig& tc, std::span<const Example> train,
                     std::span<const Example> val, model::ParameterSet params,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  model::validate(cfg);
  validate(tc);
  require(!train.empty(), ErrorCode::kEmpty, "no training examples");
  require(!val.empty(), ErrorCode::kEmpty, "no validation examples");

  ad::AdamState<float> adam({tc.lr, tc.beta1, tc.beta2, tc.epsilon}, params.tensors);
  EarlyStopping stopper(tc.patience);
  FitResult result;
  result.params = params;
  std::vector<ad::Tensor<float>> grads;

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto batches = make_batches(train, tc.batch_size, mix_seed({tc.seed, 0x42415443ull, epoch}),
                                      tc.bucket_batches);
    LossBreakdown sum;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto loss =
          batch_gradient(cfg, params, batches[b], mix_seed({tc.seed, epoch, b}), tc.workers, grads);
      ad::adam_step<float>(params.tensors, grads, adam);
      sum += loss.scaled(static_cast<double>(batches[b].size));
    }
    const auto mean = sum.scaled(1.0 / static_cast<double>(train.size()));
    const auto metrics = validate_examples(cfg, params, val);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.l_f_str = mean.frame;
    rec.l_u_str = mean.utterance;
    rec.l_cat = mean.category;
    rec.l_total = mean.total;
    rec.val_mae = metrics.mae;
    rec.val_acc = metrics.accuracy;
    rec.seconds = tc.deterministic_log
                      ? 0.0
                      : std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (stopper.update(epoch, metrics.mae)) result.params = params;
    result.epochs_run = epoch;
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  result.best_epoch = stopper.best_epoch();
  result.best_val_mae = stopper.best();
  return result;
}

}  // namespace strengthnet::pipeline
