#pragma once

// Synthetic rank-SVM instances shared by unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "strengthnet/rank/ranker.hpp"

namespace fixture {

/// Points whose first coordinate is 4 * a hidden strength and whose second is
/// unrelated noise. Ordered pairs (i, j) have strength_i > strength_j + 0.1,
/// similar pairs differ by less than 0.05, so the instance is separable along
/// (1, 0).
inline strengthnet::rank::PairSets separable_2d(std::size_t points, std::size_t n_ordered, std::size_t n_similar,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0), noise(-1.0, 1.0);
  std::vector<double> strength(points);
  strengthnet::rank::PairSets p;
  p.features.resize(static_cast<Eigen::Index>(points), 2);
  for (std::size_t i = 0; i < points; ++i) {
    strength[i] = unit(rng);
    p.features(static_cast<Eigen::Index>(i), 0) = 4.0 * strength[i];
    p.features(static_cast<Eigen::Index>(i), 1) = noise(rng);
    p.utterance_ids.push_back("p" + std::to_string(i));
  }
  std::uniform_int_distribution<std::size_t> pick(0, points - 1);
  std::set<std::pair<std::size_t, std::size_t>> used;
  while (p.ordered.size() < n_ordered) {
    const auto i = pick(rng), j = pick(rng);
    if (strength[i] > strength[j] + 0.1 && used.insert(std::minmax(i, j)).second) p.ordered.push_back({i, j});
  }
  while (p.similar.size() < n_similar) {
    const auto i = pick(rng), j = pick(rng);
    if (i != j && std::abs(strength[i] - strength[j]) < 0.05 && used.insert(std::minmax(i, j)).second) {
      p.similar.push_back({i, j});
    }
  }
  return p;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

/// Fraction of ordered pairs with w.(x_i - x_j) > 0.
inline double satisfied_fraction(const strengthnet::rank::PairSets& p, const std::vector<double>& w) {
  std::size_t ok = 0;
  for (auto q : p.ordered) {
    double d = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      d += w[k] * (p.features(static_cast<Eigen::Index>(q.first), static_cast<Eigen::Index>(k)) -
                   p.features(static_cast<Eigen::Index>(q.second), static_cast<Eigen::Index>(k)));
    }
    ok += d > 0;
  }
  return static_cast<double>(ok) / static_cast<double>(p.ordered.size());
}

}  // namespace fixture
