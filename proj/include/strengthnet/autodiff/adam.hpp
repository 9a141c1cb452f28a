#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "strengthnet/autodiff/tape.hpp"
#include "strengthnet/common/error.hpp"

namespace strengthnet::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;
};

/// First/second moment estimates for a list of parameters plus the step
/// counter used for bias correction.
template <class T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  long long step = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::span<const Tensor<T>> params) : config(cfg) {
    for (const auto& p : params) {
      m.emplace_back(p.size(), T(0));
      v.emplace_back(p.size(), T(0));
    }
  }
};

/// One Adam update with bias-corrected moments. The step counter is advanced
/// before the corrections are computed.
template <class T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    fail(ErrorCode::kShapeMismatch, "adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape != grads[i].shape || state.m[i].size() != params[i].size()) {
      fail(ErrorCode::kShapeMismatch, "adam_step: shape mismatch for parameter " + std::to_string(i));
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = T(c.beta1), b2 = T(c.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data;
    const auto& g = grads[i].data;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const double m_hat = static_cast<double>(m[k]) / correction1;
      const double v_hat = static_cast<double>(v[k]) / correction2;
      p[k] = static_cast<T>(static_cast<double>(p[k]) - c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon));
    }
  }
}

}  // namespace strengthnet::ad
