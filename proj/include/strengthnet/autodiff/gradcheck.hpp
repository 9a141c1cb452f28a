#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "strengthnet/autodiff/tape.hpp"
#include "strengthnet/common/random.hpp"

namespace strengthnet::ad {

struct GradCheckOptions {
  double step = 1e-3;
  /// Coordinates checked per input tensor; larger tensors are subsampled.
  std::size_t max_coordinates = 200;
  /// Lower bound on the relative-error denominator so that near-zero
  /// gradients are compared in absolute terms.
  double denominator_floor = 1e-6;
  /// When x - step and x + step fall on different sides of a ReLU kink the
  /// step is divided by 10, down to this value; coordinates still straddling
  /// a kink are skipped.
  double min_step = 1e-7;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t coordinates_checked = 0;
  /// Coordinates compared with a step below `step`.
  std::size_t coordinates_refined = 0;
  /// Coordinates left unchecked because every step straddled a kink.
  std::size_t coordinates_skipped = 0;
};

/// Compares reverse-mode gradients with central finite differences, both in
/// double precision. `loss_fn(tape, inputs)` must build a scalar loss from the
/// given input variables. Per coordinate the error is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
template <class LossFn>
GradCheckResult gradient_check(LossFn&& loss_fn, const std::vector<Tensor<double>>& inputs, std::uint64_t seed,
                               const GradCheckOptions& opt = {}) {
  // Activation pattern of every ReLU on the tape; equal patterns mean the
  // two evaluations lie in the same linear piece.
  using Pattern = std::vector<bool>;
  auto evaluate = [&](const std::vector<Tensor<double>>& values, bool with_grad,
                      std::vector<std::vector<double>>* grads, Pattern* pattern) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    vars.reserve(values.size());
    for (const auto& v : values) vars.push_back(with_grad ? tape.variable(v) : tape.constant(v));
    Var<double> loss = loss_fn(tape, std::span<const Var<double>>(vars));
    if (with_grad) {
      tape.backward(loss);
      grads->clear();
      for (const auto& v : vars) grads->emplace_back(v.grad().begin(), v.grad().end());
    }
    pattern->clear();
    for (std::size_t n = 0; n < tape.size(); ++n) {
      const auto& node = tape.node(n);
      if (std::string_view(node.op) != "relu") continue;
      for (double v : node.value) pattern->push_back(v > 0.0);
    }
    return loss.item();
  };

  std::vector<std::vector<double>> analytic;
  Pattern base, up_pattern, down_pattern;
  evaluate(inputs, true, &analytic, &base);

  Rng rng(mix_seed({seed, 0x4752414443484bull}));
  GradCheckResult result;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<std::size_t> coords(inputs[i].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opt.max_coordinates) {
      shuffle(std::span(coords), rng);
      coords.resize(opt.max_coordinates);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t k : coords) {
      const double original = inputs[i].data[k];
      std::optional<double> numeric;
      double step = opt.step;
      for (; step >= opt.min_step * (1.0 - 1e-9); step /= 10.0) {
        probe[i].data[k] = original + step;
        const double up = evaluate(probe, false, nullptr, &up_pattern);
        probe[i].data[k] = original - step;
        const double down = evaluate(probe, false, nullptr, &down_pattern);
        probe[i].data[k] = original;
        if (up_pattern == base && down_pattern == base) {
          numeric = (up - down) / (2.0 * step);
          break;
        }
      }
      if (!numeric) {
        ++result.coordinates_skipped;
        continue;
      }
      if (step < opt.step) ++result.coordinates_refined;
      const double a = analytic[i][k];
      const double abs_err = std::abs(a - *numeric);
      const double denom = std::max({std::abs(a), std::abs(*numeric), opt.denominator_floor});
      result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
      result.max_relative_error = std::max(result.max_relative_error, abs_err / denom);
      ++result.coordinates_checked;
    }
  }
  return result;
}

}  // namespace strengthnet::ad
