#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "strengthnet/audio/mel.hpp"
#include "strengthnet/common/random.hpp"
#include "support/oracles.hpp"

namespace sn = strengthnet;
namespace audio = strengthnet::audio;

namespace {

audio::AudioClip tone(double hz, std::size_t n, double amplitude = 0.5) {
  audio::AudioClip clip;
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples.push_back(static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * i / 16000.0)));
  }
  return clip;
}

audio::AudioClip noise(std::size_t n, std::uint64_t seed) {
  sn::Rng rng(seed);
  audio::AudioClip clip;
  for (std::size_t i = 0; i < n; ++i) clip.samples.push_back(static_cast<float>(sn::uniform(rng, -0.3, 0.3)));
  return clip;
}

audio::MelSpectrogram constant_spec(std::size_t frames, float value) {
  audio::MelSpectrogram s;
  s.num_frames = frames;
  s.num_channels = 80;
  s.frames.assign(frames * 80, value);
  return s;
}

}  // namespace

TEST(Mel, OneSecondGives77Frames) {
  const auto spec = audio::mel_spectrogram(noise(16000, 1));
  EXPECT_EQ(spec.num_frames, 77u);
  EXPECT_EQ(spec.num_channels, 80u);
  EXPECT_EQ(spec.frames.size(), 77u * 80u);
}

TEST(Mel, FramingBoundsHoldForEveryLength) {
  for (std::size_t n = 800; n < 3000; n += 7) {
    const auto t = audio::num_frames(n);
    ASSERT_GE(t, 1u);
    EXPECT_LE(800 + (t - 1) * 200, n);
    EXPECT_LT(n, 800 + t * 200);
  }
}

TEST(Mel, ShorterThanOneFrameIsTooShort) {
  try {
    audio::mel_spectrogram(noise(799, 2));
    FAIL();
  } catch (const sn::Error& e) {
    EXPECT_EQ(e.code(), sn::ErrorCode::kTooShort);
  }
  EXPECT_EQ(audio::mel_spectrogram(noise(800, 2)).num_frames, 1u);
}

TEST(Mel, SilenceSitsAtTheLogFloor) {
  audio::AudioClip clip;
  clip.samples.assign(4000, 0.0f);
  const auto spec = audio::mel_spectrogram(clip);
  const float floor = static_cast<float>(std::log(1e-10));
  for (float v : spec.frames) EXPECT_EQ(v, floor);
}

TEST(Mel, ToneLandsInChannelWithNearestCenter) {
  const auto centers = oracle::mel_centers(80, 0.0, 8000.0);
  std::size_t expected = 0;
  for (std::size_t m = 1; m < centers.size(); ++m) {
    if (std::abs(centers[m] - 1000.0) < std::abs(centers[expected] - 1000.0)) expected = m;
  }
  const auto spec = audio::mel_spectrogram(tone(1000.0, 8000));
  for (std::size_t t = 0; t < spec.num_frames; ++t) {
    const auto f = spec.frame(t);
    const auto arg = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
    EXPECT_EQ(arg, expected) << "frame " << t;
  }
}

TEST(Mel, FilterbankCentersMatchIndependentFormula) {
  const audio::MelFilterbank bank;
  const auto centers = oracle::mel_centers(80, 0.0, 8000.0);
  ASSERT_EQ(bank.center_frequencies().size(), 80u);
  for (std::size_t m = 0; m < 80; ++m) EXPECT_NEAR(bank.center_frequencies()[m], centers[m], 1e-6);
}

TEST(Mel, FilterbankRowsArePositiveOverlappingAndIncreasing) {
  const audio::MelFilterbank bank;
  const auto centers = bank.center_frequencies();
  for (int m = 0; m < bank.num_mels(); ++m) {
    const auto row = bank.row(m);
    double total = 0;
    for (double w : row) total += w;
    EXPECT_GT(total, 0.0) << "row " << m;
    if (m > 0) {
      EXPECT_GT(centers[m], centers[m - 1]);
      const auto prev = bank.row(m - 1);
      bool overlap = false;
      for (int k = 0; k < bank.num_bins(); ++k) overlap = overlap || (row[k] > 0 && prev[k] > 0);
      // The lowest triangles are narrower than one FFT bin and cannot share one.
      if (centers[m] - centers[m - 1] > 2 * 16000.0 / 1024) {
        EXPECT_TRUE(overlap) << "rows " << m - 1 << "," << m;
      }
    }
  }
}

TEST(Mel, DeterministicOnIdenticalInput) {
  const auto clip = noise(5000, 3);
  const auto a = audio::mel_spectrogram(clip);
  const auto b = audio::mel_spectrogram(clip);
  EXPECT_EQ(a.frames, b.frames);
}

TEST(Mel, DoublingAmplitudeQuadruplesPower) {
  const auto clip = noise(3000, 4);
  auto doubled = clip.samples;
  for (auto& s : doubled) s *= 2.0f;
  const auto p1 = audio::mel_power(clip.samples);
  const auto p2 = audio::mel_power(doubled);
  ASSERT_EQ(p1.size(), p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_NEAR(p2[i] / p1[i], 4.0, 4e-9) << i;
}

TEST(Normalize, ConstantSpectrogramBecomesZero) {
  const std::vector<audio::MelSpectrogram> specs{constant_spec(5, 3.0f)};
  const auto out = audio::normalize_corpus(specs);
  for (float v : out.specs[0].frames) EXPECT_EQ(v, 0.0f);
  EXPECT_TRUE(out.specs[0].normalized);
}

TEST(Normalize, TwoValuesMapToMinusOnePlusOne) {
  const std::vector<audio::MelSpectrogram> specs{constant_spec(1, 1.0f), constant_spec(1, 3.0f)};
  const auto out = audio::normalize_corpus(specs);
  for (float v : out.specs[0].frames) EXPECT_FLOAT_EQ(v, -1.0f);
  for (float v : out.specs[1].frames) EXPECT_FLOAT_EQ(v, 1.0f);
  EXPECT_FLOAT_EQ(out.stats.mean[0], 2.0f);
  EXPECT_FLOAT_EQ(out.stats.stddev[0], 1.0f);
}

TEST(Normalize, RecomputedStatisticsAreStandard) {
  std::vector<audio::MelSpectrogram> specs;
  for (std::uint64_t s = 0; s < 4; ++s) specs.push_back(audio::mel_spectrogram(noise(2000 + 700 * s, 10 + s)));
  const auto out = audio::normalize_corpus(specs);
  for (std::size_t c = 0; c < 80; ++c) {
    std::vector<double> values;
    for (const auto& s : out.specs) {
      for (std::size_t t = 0; t < s.num_frames; ++t) values.push_back(s.at(t, c));
    }
    const double mean = oracle::naive_mean(values);
    double var = 0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    EXPECT_NEAR(mean, 0.0, 1e-6) << "channel " << c;
    EXPECT_NEAR(var, 1.0, 1e-3) << "channel " << c;
  }
}

TEST(Normalize, EmptyCorpusIsRejected) {
  try {
    audio::normalize_corpus(std::vector<audio::MelSpectrogram>{});
    FAIL();
  } catch (const sn::Error& e) {
    EXPECT_EQ(e.code(), sn::ErrorCode::kEmptyCorpus);
  }
}

TEST(MelFile, RoundTripIsBitExact) {
  const auto spec = audio::mel_spectrogram(noise(3000, 5));
  const auto back = audio::decode_mel(audio::encode_mel(spec));
  EXPECT_EQ(back.num_frames, spec.num_frames);
  EXPECT_EQ(back.num_channels, 80u);
  EXPECT_EQ(back.frames, spec.frames);
}

TEST(MelFile, HeaderLayout) {
  const auto bytes = audio::encode_mel(constant_spec(2, 1.0f));
  EXPECT_EQ(bytes.substr(0, 4), "MELF");
  EXPECT_EQ(bytes.size(), 16u + 2 * 80 * 4);
}

TEST(MelFile, CorruptionIsDetected) {
  auto bytes = audio::encode_mel(constant_spec(2, 1.0f));
  EXPECT_THROW(audio::decode_mel(bytes.substr(0, bytes.size() - 3)), sn::Error);
  bytes[0] = 'X';
  EXPECT_THROW(audio::decode_mel(bytes), sn::Error);
}

TEST(NormStatsFile, RoundTrip) {
  const std::vector<audio::MelSpectrogram> specs{audio::mel_spectrogram(noise(3000, 6))};
  const auto stats = audio::compute_norm_stats(specs);
  const auto dir = oracle::scratch_dir("norm_stats");
  audio::save_norm_stats(dir / "n.nrms", stats);
  const auto back = audio::load_norm_stats(dir / "n.nrms");
  EXPECT_EQ(back.mean, stats.mean);
  EXPECT_EQ(back.stddev, stats.stddev);
  EXPECT_EQ(std::filesystem::file_size(dir / "n.nrms"), 8u + 2 * 80 * 4);
}
