#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "strengthnet/audio/mel.hpp"
#include "strengthnet/autodiff/ops.hpp"
#include "strengthnet/autodiff/tape.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/common/random.hpp"
#include "strengthnet/model/config.hpp"

namespace strengthnet::model {

/// Named parameter tensors in a fixed order (the order of `parameter_layout`).
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<ad::Tensor<float>> tensors;

  std::size_t size() const { return tensors.size(); }

  const ad::Tensor<float>& at(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return tensors[i];
    }
    fail(ErrorCode::kInvalidArgument, "no parameter named " + std::string(name));
  }
  ad::Tensor<float>& at(std::string_view name) {
    return const_cast<ad::Tensor<float>&>(std::as_const(*this).at(name));
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

inline std::string conv_name(std::size_t block, std::size_t layer) {
  return "encoder.block" + std::to_string(block) + ".conv" + std::to_string(layer);
}

/// Name and shape of every parameter implied by the config.
inline std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const StrengthNetConfig& c) {
  validate(c);
  std::vector<std::pair<std::string, ad::Shape>> layout;
  std::size_t channels = 1;
  for (std::size_t b = 0; b < c.conv_block_filters.size(); ++b) {
    const std::size_t filters = c.conv_block_filters[b];
    for (std::size_t l = 0; l < c.layers_per_block; ++l) {
      layout.push_back({conv_name(b, l) + ".kernel", {c.kernel_time, c.kernel_freq, channels, filters}});
      layout.push_back({conv_name(b, l) + ".bias", {filters}});
      channels = filters;
    }
  }
  const std::size_t enc = encoder_output_dim(c);
  const std::size_t H = c.bilstm_hidden;
  auto lstm = [&](const std::string& prefix) {
    for (const char* dir : {"fwd", "bwd"}) {
      layout.push_back({prefix + "." + dir + ".input_kernel", {enc, 4 * H}});
      layout.push_back({prefix + "." + dir + ".recurrent_kernel", {H, 4 * H}});
      layout.push_back({prefix + "." + dir + ".bias", {4 * H}});
    }
  };
  lstm("strength.bilstm");
  layout.push_back({"strength.fc1.kernel", {2 * H, c.fc_hidden}});
  layout.push_back({"strength.fc1.bias", {c.fc_hidden}});
  layout.push_back({"strength.fc2.kernel", {c.fc_hidden, 1}});
  layout.push_back({"strength.fc2.bias", {1}});
  lstm("emotion.bilstm");
  layout.push_back({"emotion.out.kernel", {2 * H, c.num_emotions}});
  layout.push_back({"emotion.out.bias", {c.num_emotions}});
  return layout;
}

/// Glorot-uniform convolution and dense kernels, zero biases, LSTM weights
/// uniform in +-1/sqrt(H) with the forget-gate bias set to 1.
inline ParameterSet init_parameters(const StrengthNetConfig& c, std::uint64_t seed) {
  ParameterSet ps;
  Rng rng(mix_seed({seed, 0x494e4954ull}));
  const double lstm_limit = 1.0 / std::sqrt(static_cast<double>(c.bilstm_hidden));
  for (auto& [name, shape] : parameter_layout(c)) {
    auto t = ad::Tensor<float>::zeros(shape);
    const bool is_bias = name.ends_with(".bias");
    const bool is_lstm = name.find("bilstm") != std::string::npos;
    if (is_lstm && is_bias) {
      const std::size_t H = c.bilstm_hidden;
      for (std::size_t j = H; j < 2 * H; ++j) t.data[j] = 1.0f;
    } else if (is_lstm) {
      for (auto& v : t.data) v = static_cast<float>(uniform(rng, -lstm_limit, lstm_limit));
    } else if (!is_bias) {
      std::size_t fan_in = 1, fan_out = 1;
      if (shape.size() == 4) {
        fan_in = shape[0] * shape[1] * shape[2];
        fan_out = shape[0] * shape[1] * shape[3];
      } else {
        fan_in = shape[0];
        fan_out = shape[1];
      }
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& v : t.data) v = static_cast<float>(uniform(rng, -limit, limit));
    }
    ps.names.push_back(name);
    ps.tensors.push_back(std::move(t));
  }
  return ps;
}

/// Parameters placed on a tape, addressable by name.
template <class T>
struct BoundParameters {
  std::map<std::string, ad::Var<T>, std::less<>> vars;

  const ad::Var<T>& operator[](std::string_view name) const {
    auto it = vars.find(name);
    if (it == vars.end()) fail(ErrorCode::kInvalidArgument, "unbound parameter " + std::string(name));
    return it->second;
  }
  ad::LstmWeights<T> lstm(const std::string& prefix) const {
    return {(*this)[prefix + ".input_kernel"], (*this)[prefix + ".recurrent_kernel"], (*this)[prefix + ".bias"]};
  }
};

/// Copies every parameter onto `tape` (converted to T). With `trainable` the
/// copies are gradient leaves in ParameterSet order.
template <class T>
BoundParameters<T> bind_parameters(ad::Tape<T>& tape, const ParameterSet& ps, bool trainable,
                                   std::vector<ad::Var<T>>* leaves = nullptr) {
  BoundParameters<T> bound;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& t = ps.tensors[i];
    std::vector<T> values(t.data.begin(), t.data.end());
    auto v = trainable ? tape.variable(t.shape, std::move(values)) : tape.constant(t.shape, std::move(values));
    bound.vars.emplace(ps.names[i], v);
    if (leaves) leaves->push_back(v);
  }
  return bound;
}

struct ForwardOptions {
  bool train = false;
  std::uint64_t dropout_seed = 0;
};

template <class T>
struct OutputVars {
  ad::Var<T> encoded;          // H [T, enc]
  ad::Var<T> frame_scores;     // [T]
  ad::Var<T> utterance_score;  // [1]
  ad::Var<T> emotion_probs;    // [K]
};

/// Conv encoder: input [T, mel] -> H [T, freq_final * filters]. Padded frames
/// are re-zeroed after each layer so they behave like the convolution's own
/// zero padding.
template <class T>
ad::Var<T> encoder_forward(const StrengthNetConfig& c, const BoundParameters<T>& p, const ad::Var<T>& mel,
                           std::span<const T> mask) {
  if (mel.shape().size() != 2 || mel.dim(1) != c.mel_channels || mel.dim(0) == 0) {
    fail(ErrorCode::kShapeMismatch, "encoder expects [T," + std::to_string(c.mel_channels) + "], got " +
                                        ad::shape_string(mel.shape()));
  }
  auto h = ad::mask_time(ad::reshape(mel, {mel.dim(0), c.mel_channels, 1}), mask);
  for (std::size_t b = 0; b < c.conv_block_filters.size(); ++b) {
    for (std::size_t l = 0; l < c.layers_per_block; ++l) {
      const auto name = conv_name(b, l);
      h = ad::conv2d(h, p[name + ".kernel"], p[name + ".bias"], c.block_strides[l]);
      h = ad::mask_time(ad::relu(h), mask);
    }
  }
  return ad::flatten_freq_channels(h);
}

/// Strength head: BiLSTM -> FC(ReLU) -> FC(sigmoid) per frame, then the
/// masked mean over frames. Returns (frame scores [T], utterance score [1]).
template <class T>
std::pair<ad::Var<T>, ad::Var<T>> strength_forward(const StrengthNetConfig& c, const BoundParameters<T>& p,
                                                   const ad::Var<T>& encoded, std::span<const T> mask,
                                                   const ForwardOptions& opt) {
  auto s = ad::bilstm(encoded, p.lstm("strength.bilstm.fwd"), p.lstm("strength.bilstm.bwd"), mask);
  s = ad::dropout(s, c.dropout, opt.train, mix_seed({opt.dropout_seed, 1}));
  auto hidden = ad::relu(ad::dense(s, p["strength.fc1.kernel"], p["strength.fc1.bias"]));
  hidden = ad::dropout(hidden, c.dropout, opt.train, mix_seed({opt.dropout_seed, 2}));
  auto frame = ad::sigmoid(ad::dense(hidden, p["strength.fc2.kernel"], p["strength.fc2.bias"]));
  auto utterance = ad::avg_pool_time(frame, mask);
  return {ad::reshape(frame, {frame.dim(0)}), utterance};
}

/// Emotion head: BiLSTM -> masked mean over time -> dense -> softmax.
template <class T>
ad::Var<T> emotion_forward(const StrengthNetConfig& c, const BoundParameters<T>& p, const ad::Var<T>& encoded,
                           std::span<const T> mask, const ForwardOptions& opt) {
  auto s = ad::bilstm(encoded, p.lstm("emotion.bilstm.fwd"), p.lstm("emotion.bilstm.bwd"), mask);
  s = ad::dropout(s, c.dropout, opt.train, mix_seed({opt.dropout_seed, 3}));
  auto pooled = ad::avg_pool_time(s, mask);
  return ad::softmax(ad::dense(pooled, p["emotion.out.kernel"], p["emotion.out.bias"]));
}

template <class T>
OutputVars<T> forward(const StrengthNetConfig& c, const BoundParameters<T>& p, const ad::Var<T>& mel,
                      std::span<const T> mask, const ForwardOptions& opt = {}) {
  OutputVars<T> out;
  out.encoded = encoder_forward(c, p, mel, mask);
  std::tie(out.frame_scores, out.utterance_score) = strength_forward(c, p, out.encoded, mask, opt);
  out.emotion_probs = emotion_forward(c, p, out.encoded, mask, opt);
  return out;
}

template <class T>
struct LossVars {
  ad::Var<T> frame;      // masked mean |alpha_f - gt|
  ad::Var<T> utterance;  // |alpha - gt|
  ad::Var<T> category;   // cross-entropy of the emotion head
  ad::Var<T> total;      // frame + utterance + category, unweighted
};

template <class T>
LossVars<T> total_loss(const OutputVars<T>& out, T gt_strength, std::span<const T> gt_one_hot,
                       std::span<const T> mask) {
  if (gt_one_hot.size() != out.emotion_probs.size()) {
    fail(ErrorCode::kShapeMismatch, "one-hot target has " + std::to_string(gt_one_hot.size()) +
                                        " classes, model predicts " + std::to_string(out.emotion_probs.size()));
  }
  const std::vector<T> frame_target(out.frame_scores.size(), gt_strength);
  const T utt_target[1] = {gt_strength};
  LossVars<T> l;
  l.frame = ad::mae_loss(out.frame_scores, std::span<const T>(frame_target), mask);
  l.utterance = ad::mae_loss(out.utterance_score, std::span<const T>(utt_target));
  l.category = ad::cross_entropy_loss(out.emotion_probs, gt_one_hot);
  l.total = ad::add(ad::add(l.frame, l.utterance), l.category);
  return l;
}

/// Inference result for one utterance; frame scores cover unmasked frames.
struct ModelOutput {
  std::vector<float> frame_scores;
  float utterance_score = 0.0f;
  std::vector<float> emotion_probs;

  std::size_t predicted_emotion() const {
    return static_cast<std::size_t>(std::max_element(emotion_probs.begin(), emotion_probs.end()) -
                                    emotion_probs.begin());
  }
};

/// Inference on a normalized mel spectrogram (dropout off).
inline ModelOutput predict(const StrengthNetConfig& c, const ParameterSet& params, const audio::MelSpectrogram& mel) {
  ad::Tape<float> tape;
  const auto bound = bind_parameters(tape, params, false);
  auto x = tape.constant({mel.num_frames, mel.num_channels}, mel.frames);
  const std::vector<float> mask(mel.num_frames, 1.0f);
  const auto out = forward<float>(c, bound, x, mask);
  ModelOutput result;
  result.frame_scores.assign(out.frame_scores.value().begin(), out.frame_scores.value().end());
  result.utterance_score = out.utterance_score.item();
  result.emotion_probs.assign(out.emotion_probs.value().begin(), out.emotion_probs.value().end());
  return result;
}

}  // namespace strengthnet::model
