#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "strengthnet/audio/features.hpp"
#include "strengthnet/common/random.hpp"
#include "support/oracles.hpp"

namespace sn = strengthnet;
namespace audio = strengthnet::audio;
using audio::Functional;

namespace {

audio::MelSpectrogram random_spec(std::size_t frames, std::uint64_t seed) {
  sn::Rng rng(seed);
  audio::MelSpectrogram s;
  s.num_frames = frames;
  s.num_channels = 80;
  for (std::size_t i = 0; i < frames * 80; ++i) s.frames.push_back(static_cast<float>(sn::uniform(rng, -5, 2)));
  return s;
}

double functional(const audio::UtteranceFeatureVector& fv, std::size_t descriptor, Functional f) {
  return fv.values[descriptor * audio::kNumFunctionals + static_cast<std::size_t>(f)];
}

}  // namespace

TEST(Features, DimensionsOfBothSets) {
  EXPECT_EQ(audio::feature_dimension(audio::FeatureSet::kFull), 1456u);
  EXPECT_EQ(audio::feature_dimension(audio::FeatureSet::kReduced), 416u);
  const auto spec = random_spec(10, 1);
  EXPECT_EQ(audio::functional_features(spec).dim(), 1456u);
  EXPECT_EQ(audio::functional_features(spec, audio::FeatureSet::kReduced).dim(), 416u);
}

TEST(Features, DimensionIndependentOfLength) {
  EXPECT_EQ(audio::functional_features(random_spec(2, 2)).dim(), audio::functional_features(random_spec(93, 3)).dim());
}

TEST(Features, ConstantSpectrogramHasZeroSpreadSlopeAndDelta) {
  audio::MelSpectrogram s;
  s.num_frames = 12;
  s.num_channels = 80;
  s.frames.assign(12 * 80, -3.0f);
  const auto fv = audio::functional_features(s);
  const std::size_t descriptors = 80 + audio::kNumDerivedDescriptors;
  for (std::size_t d = 0; d < descriptors; ++d) {
    for (auto f : {Functional::kStd, Functional::kRange, Functional::kSlope, Functional::kMeanAbsDelta,
                   Functional::kMaxAbsDelta, Functional::kSkewness, Functional::kKurtosis}) {
      EXPECT_EQ(functional(fv, d, f), 0.0) << "descriptor " << d << " functional " << static_cast<int>(f);
    }
  }
  for (std::size_t c = 0; c < 80; ++c) EXPECT_EQ(functional(fv, c, Functional::kMean), -3.0);
}

TEST(Features, Channel0MeanMatchesNaiveMean) {
  const auto spec = random_spec(41, 4);
  std::vector<double> column;
  for (std::size_t t = 0; t < spec.num_frames; ++t) column.push_back(spec.at(t, 0));
  EXPECT_NEAR(functional(audio::functional_features(spec), 0, Functional::kMean), oracle::naive_mean(column), 1e-12);
}

TEST(Features, FunctionalsOfKnownSeries) {
  // Channel 5 carries 1..5; every other channel is constant.
  audio::MelSpectrogram s;
  s.num_frames = 5;
  s.num_channels = 80;
  s.frames.assign(5 * 80, 0.0f);
  for (std::size_t t = 0; t < 5; ++t) s.at(t, 5) = static_cast<float>(t + 1);
  const auto fv = audio::functional_features(s);
  EXPECT_DOUBLE_EQ(functional(fv, 5, Functional::kMean), 3.0);
  EXPECT_DOUBLE_EQ(functional(fv, 5, Functional::kStd), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(functional(fv, 5, Functional::kMin), 1.0);
  EXPECT_DOUBLE_EQ(functional(fv, 5, Functional::kMax), 5.0);
  EXPECT_DOUBLE_EQ(functional(fv, 5, Functional::kRange), 4.0);
  EXPECT_DOUBLE_EQ(functional(fv, 5, Functional::kMedian), 3.0);
  EXPECT_DOUBLE_EQ(functional(fv, 5, Functional::kQuartile1), 2.0);
  EXPECT_DOUBLE_EQ(functional(fv, 5, Functional::kQuartile3), 4.0);
  EXPECT_NEAR(functional(fv, 5, Functional::kSkewness), 0.0, 1e-12);
  EXPECT_NEAR(functional(fv, 5, Functional::kKurtosis), -1.3, 1e-12);
  EXPECT_NEAR(functional(fv, 5, Functional::kSlope), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(functional(fv, 5, Functional::kMeanAbsDelta), 1.0);
  EXPECT_DOUBLE_EQ(functional(fv, 5, Functional::kMaxAbsDelta), 1.0);
}

TEST(Features, OrderIsStableAcrossCalls) {
  const auto spec = random_spec(20, 5);
  EXPECT_EQ(audio::functional_features(spec).values, audio::functional_features(spec).values);
}

TEST(Features, ReducedSetIsTheTailOfTheFullSet) {
  const auto spec = random_spec(17, 6);
  const auto full = audio::functional_features(spec).values;
  const auto reduced = audio::functional_features(spec, audio::FeatureSet::kReduced).values;
  EXPECT_TRUE(std::equal(reduced.begin(), reduced.end(), full.end() - static_cast<std::ptrdiff_t>(reduced.size())));
}

TEST(Features, SingleFrameIsTooFew) {
  try {
    audio::functional_features(random_spec(1, 7));
    FAIL();
  } catch (const sn::Error& e) {
    EXPECT_EQ(e.code(), sn::ErrorCode::kTooFewFrames);
  }
}

TEST(Features, AllEntriesFinite) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (double v : audio::functional_features(random_spec(2 + seed * 13, seed)).values) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Features, FileRoundTrip) {
  const auto fv = audio::functional_features(random_spec(9, 8));
  const auto dir = oracle::scratch_dir("features");
  audio::save_features(dir / "f.func", fv);
  EXPECT_EQ(audio::load_features(dir / "f.func").values, fv.values);
}
