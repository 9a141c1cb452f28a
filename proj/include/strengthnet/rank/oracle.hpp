#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <vector>

#include "strengthnet/common/error.hpp"
#include "strengthnet/rank/ranker.hpp"

namespace strengthnet::rank {

namespace detail {

/// Minimizes the objective along t * u for t >= 0. The objective is convex in
/// t, so golden-section search on a bracket found by doubling converges to
/// the line minimum.
inline double line_minimum(const RankObjective& f, const Eigen::VectorXd& u, double& best_t) {
  auto at = [&](double t) { return f.value(t * u); };
  double hi = 1.0;
  while (at(2.0 * hi) < at(hi) && hi < 1e12) hi *= 2.0;
  double a = 0.0, b = 2.0 * hi;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = at(c), fd = at(d);
  for (int i = 0; i < 200 && b - a > 1e-12 * (1.0 + b); ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = at(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = at(d);
    }
  }
  best_t = 0.5 * (a + b);
  return at(best_t);
}

}  // namespace detail

/// Exhaustive search for the rank objective's minimizer in raw feature
/// space: every unit direction on a grid (2 points for D=1, `resolution`
/// angles for D=2, a resolution x resolution/2 latitude-longitude grid for
/// D=3), each with its optimal magnitude.
inline std::vector<double> brute_force_rank_oracle(const PairSets& pairs, double C, int resolution = 3600) {
  const auto D = pairs.features.cols();
  if (D > 3) {
    fail(ErrorCode::kDimensionTooLarge, "brute-force oracle supports D <= 3, got " + std::to_string(D));
  }
  require(D >= 1, ErrorCode::kInvalidArgument, "oracle needs at least one feature");
  require(resolution >= 4, ErrorCode::kInvalidArgument, "oracle resolution must be at least 4");
  const RankObjective f(pairs.features, pairs.ordered, pairs.similar, C);

  std::vector<Eigen::VectorXd> directions;
  if (D == 1) {
    directions.push_back(Eigen::VectorXd::Constant(1, 1.0));
    directions.push_back(Eigen::VectorXd::Constant(1, -1.0));
  } else if (D == 2) {
    for (int k = 0; k < resolution; ++k) {
      const double a = 2.0 * std::numbers::pi * k / resolution;
      directions.push_back((Eigen::VectorXd(2) << std::cos(a), std::sin(a)).finished());
    }
  } else {
    const int n_lat = resolution / 2;
    for (int i = 0; i <= n_lat; ++i) {
      const double theta = std::numbers::pi * i / n_lat;
      const int n_lon = (i == 0 || i == n_lat) ? 1 : resolution;
      for (int k = 0; k < n_lon; ++k) {
        const double phi = 2.0 * std::numbers::pi * k / resolution;
        directions.push_back((Eigen::VectorXd(3) << std::sin(theta) * std::cos(phi),
                              std::sin(theta) * std::sin(phi), std::cos(theta))
                                 .finished());
      }
    }
  }

  double best = f.value(Eigen::VectorXd::Zero(D));
  Eigen::VectorXd best_w = Eigen::VectorXd::Zero(D);
  for (const auto& u : directions) {
    double t = 0.0;
    const double v = detail::line_minimum(f, u, t);
    if (v < best) {
      best = v;
      best_w = t * u;
    }
  }
  return {best_w.data(), best_w.data() + D};
}

}  // namespace strengthnet::rank
