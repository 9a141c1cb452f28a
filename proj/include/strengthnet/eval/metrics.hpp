#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "strengthnet/common/error.hpp"

namespace strengthnet::eval {

namespace detail {

inline void check_pair(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    fail(ErrorCode::kLengthMismatch, std::string(what) + ": " + std::to_string(a) + " predictions vs " +
                                         std::to_string(b) + " targets");
  }
  if (a == 0) fail(ErrorCode::kEmpty, std::string(what) + ": no values");
}

}  // namespace detail

inline double mae(std::span<const double> predicted, std::span<const double> truth) {
  detail::check_pair(predicted.size(), truth.size(), "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) s += std::abs(predicted[i] - truth[i]);
  return s / static_cast<double>(predicted.size());
}

/// Index of the largest probability; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> probs) {
  require(!probs.empty(), ErrorCode::kEmpty, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

/// Fraction of rows whose argmax equals the label.
inline double ser_accuracy(std::span<const std::vector<double>> probs, std::span<const std::size_t> labels) {
  detail::check_pair(probs.size(), labels.size(), "ser_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (argmax(probs[i]) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

/// Normal/strong threshold on the strength axis; values at the threshold are strong.
inline constexpr double kStrongThreshold = 0.5;

inline std::size_t strength_category(double s) { return s >= kStrongThreshold ? 1 : 0; }

/// Rows are the reference category, columns the predicted one
/// (0 = normal, 1 = strong).
struct ConfusionMatrix {
  std::array<std::array<std::size_t, 2>, 2> counts{};

  std::size_t row_total(std::size_t r) const { return counts[r][0] + counts[r][1]; }
  std::size_t total() const { return row_total(0) + row_total(1); }
  double row_percent(std::size_t r, std::size_t c) const {
    const auto n = row_total(r);
    return n == 0 ? 0.0 : 100.0 * static_cast<double>(counts[r][c]) / static_cast<double>(n);
  }
  double diagonal_fraction() const {
    const auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(counts[0][0] + counts[1][1]) / static_cast<double>(n);
  }
};

inline ConfusionMatrix strength_confusion(std::span<const double> predicted, std::span<const std::size_t> reference) {
  detail::check_pair(predicted.size(), reference.size(), "strength_confusion");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    require(reference[i] < 2, ErrorCode::kOutOfRange, "reference category must be 0 or 1");
    ++m.counts[reference[i]][strength_category(predicted[i])];
  }
  return m;
}

/// Equal-width bins over [0, 1]; 1.0 falls in the last bin.
inline std::vector<std::size_t> histogram(std::span<const double> values, std::size_t bins = 20) {
  require(bins > 0, ErrorCode::kInvalidArgument, "histogram needs at least one bin");
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::kOutOfRange, "histogram value outside [0,1]: " + std::to_string(v));
    const auto b = std::min(bins - 1, static_cast<std::size_t>(v * static_cast<double>(bins)));
    ++counts[b];
  }
  return counts;
}

/// 1-based ranks; tied values share their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman correlation: Pearson correlation of average ranks.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::kLengthMismatch, "spearman: inputs differ in length");
  if (a.size() < 2) fail(ErrorCode::kTooShort, "spearman needs at least 2 values");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) fail(ErrorCode::kZeroVariance, "spearman: an input is constant");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace strengthnet::eval
