#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "strengthnet/model/checkpoint.hpp"
#include "strengthnet/model/strengthnet.hpp"
#include "support/gradcheck_cases.hpp"
#include "support/oracles.hpp"

namespace sn = strengthnet;
namespace ad = strengthnet::ad;
namespace model = strengthnet::model;

namespace {

model::StrengthNetConfig tiny_config() {
  model::StrengthNetConfig c;
  c.conv_block_filters = {4, 8};
  c.bilstm_hidden = 8;
  c.fc_hidden = 8;
  return c;
}

sn::audio::MelSpectrogram random_mel(std::size_t frames, std::uint64_t seed) {
  const auto t = fixture::random_tensor({frames, 80}, seed, -2, 2);
  sn::audio::MelSpectrogram m;
  m.num_frames = frames;
  m.num_channels = 80;
  m.normalized = true;
  for (double v : t.data) m.frames.push_back(static_cast<float>(v));
  return m;
}

template <class T>
model::OutputVars<T> run_forward(ad::Tape<T>& tape, const model::StrengthNetConfig& c, const model::ParameterSet& ps,
                                 const sn::audio::MelSpectrogram& mel, const std::vector<T>& mask) {
  const auto bound = model::bind_parameters(tape, ps, false);
  std::vector<T> values(mel.frames.begin(), mel.frames.end());
  auto x = tape.constant({mel.num_frames, mel.num_channels}, std::move(values));
  return model::forward<T>(c, bound, x, std::span<const T>(mask), {});
}

sn::ErrorCode error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const sn::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return sn::ErrorCode::kIoError;
}

}  // namespace

TEST(Config, DefaultFrequencyChain) {
  const model::StrengthNetConfig c;
  EXPECT_EQ(model::frequency_chain(c), (std::vector<std::size_t>{80, 27, 9, 3, 1}));
  EXPECT_EQ(model::encoder_output_dim(c), 128u);
}

TEST(Config, ValidationRejectsBadValues) {
  auto expect_invalid = [](auto mutate) {
    model::StrengthNetConfig c;
    mutate(c);
    EXPECT_EQ(error_of([&] { model::validate(c); }), sn::ErrorCode::kInvalidArgument);
  };
  expect_invalid([](auto& c) { c.block_strides[0].time = 2; });
  expect_invalid([](auto& c) { c.dropout = 1.0; });
  expect_invalid([](auto& c) { c.num_emotions = 1; });
  expect_invalid([](auto& c) { c.layers_per_block = 2; });
  expect_invalid([](auto& c) { c.conv_block_filters.clear(); });
}

TEST(Config, KeyValuesRoundTrip) {
  auto c = tiny_config();
  c.dropout = 0.125;
  model::StrengthNetConfig back;
  back.conv_block_filters = {1};
  for (const auto& [k, v] : model::to_key_values(c)) EXPECT_TRUE(model::set_field(back, k, v)) << k;
  EXPECT_EQ(back, c);
  EXPECT_FALSE(model::set_field(back, "learning_rate", "1"));
  EXPECT_EQ(error_of([&] { model::set_field(back, "kernel", "3"); }), sn::ErrorCode::kParseError);
}

class EncoderShape : public ::testing::TestWithParam<std::size_t> {};

TEST_P(EncoderShape, MapsFramesTo128Features) {
  const model::StrengthNetConfig c;
  const auto ps = model::init_parameters(c, 1);
  const auto frames = GetParam();
  ad::Tape<float> tape;
  const auto bound = model::bind_parameters(tape, ps, false);
  const auto mel = random_mel(frames, frames);
  auto x = tape.constant({frames, 80}, mel.frames);
  const std::vector<float> mask(frames, 1.0f);
  const auto h = model::encoder_forward<float>(c, bound, x, std::span<const float>(mask));
  EXPECT_EQ(h.shape(), (ad::Shape{frames, 128}));
}

INSTANTIATE_TEST_SUITE_P(Frames, EncoderShape, ::testing::Values(1u, 7u, 77u));

TEST(Encoder, RejectsWrongMelWidth) {
  const auto c = tiny_config();
  const auto ps = model::init_parameters(c, 1);
  ad::Tape<float> tape;
  const auto bound = model::bind_parameters(tape, ps, false);
  auto x = tape.constant({3, 40}, std::vector<float>(120, 0.0f));
  const std::vector<float> mask(3, 1.0f);
  EXPECT_EQ(error_of([&] { model::encoder_forward<float>(c, bound, x, std::span<const float>(mask)); }),
            sn::ErrorCode::kShapeMismatch);
}

TEST(Parameters, LayoutNamesAreUniqueAndShapesFollowConfig) {
  const model::StrengthNetConfig c;
  const auto layout = model::parameter_layout(c);
  std::set<std::string> names;
  for (const auto& [n, s] : layout) EXPECT_TRUE(names.insert(n).second) << n;
  EXPECT_EQ(layout.front().second, (ad::Shape{3, 3, 1, 16}));
  const auto ps = model::init_parameters(c, 1);
  EXPECT_EQ(ps.at("strength.bilstm.fwd.input_kernel").shape, (ad::Shape{128, 512}));
  EXPECT_EQ(ps.at("strength.fc2.kernel").shape, (ad::Shape{128, 1}));
  EXPECT_EQ(ps.at("emotion.out.kernel").shape, (ad::Shape{256, 4}));
  EXPECT_THROW(ps.at("no.such.tensor"), sn::Error);
}

TEST(Parameters, InitIsSeededAndBounded) {
  const auto c = tiny_config();
  EXPECT_EQ(model::init_parameters(c, 3), model::init_parameters(c, 3));
  EXPECT_FALSE(model::init_parameters(c, 3) == model::init_parameters(c, 4));
  const auto ps = model::init_parameters(c, 3);
  const auto& k = ps.at("encoder.block0.conv0.kernel");
  const double limit = std::sqrt(6.0 / (9.0 + 36.0));
  for (float v : k.data) EXPECT_LE(std::abs(v), limit);
  const auto& lstm_bias = ps.at("strength.bilstm.fwd.bias");
  for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(lstm_bias.data[j], (j >= 8 && j < 16) ? 1.0f : 0.0f);
  for (float v : ps.at("strength.fc1.bias").data) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, OutputsSatisfyRangeAndMeanIdentities) {
  const auto c = tiny_config();
  const auto ps = model::init_parameters(c, 5);
  for (std::size_t frames : {1u, 4u, 13u}) {
    const auto out = model::predict(c, ps, random_mel(frames, 10 + frames));
    ASSERT_EQ(out.frame_scores.size(), frames);
    double mean = 0;
    for (float s : out.frame_scores) {
      EXPECT_GE(s, 0.0f);
      EXPECT_LE(s, 1.0f);
      mean += s;
    }
    mean /= static_cast<double>(frames);
    EXPECT_NEAR(out.utterance_score, mean, 1e-6);
    ASSERT_EQ(out.emotion_probs.size(), 4u);
    EXPECT_NEAR(std::accumulate(out.emotion_probs.begin(), out.emotion_probs.end(), 0.0), 1.0, 1e-6);
    EXPECT_LT(out.predicted_emotion(), 4u);
  }
}

TEST(Forward, PaddingWithMaskMatchesUnpaddedInput) {
  const auto c = tiny_config();
  const auto ps = model::init_parameters(c, 6);
  const auto mel = random_mel(5, 7);
  auto padded = mel;
  padded.num_frames = 8;
  for (int i = 0; i < 3 * 80; ++i) padded.frames.push_back(3.0f);
  ad::Tape<double> t1, t2;
  const auto a = run_forward<double>(t1, c, ps, mel, std::vector<double>(5, 1.0));
  const auto b = run_forward<double>(t2, c, ps, padded, {1, 1, 1, 1, 1, 0, 0, 0});
  EXPECT_NEAR(a.utterance_score.item(), b.utterance_score.item(), 1e-12);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a.frame_scores.value()[i], b.frame_scores.value()[i], 1e-12);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(a.emotion_probs.value()[k], b.emotion_probs.value()[k], 1e-12);
}

TEST(Forward, FloatAndDoubleAgree) {
  const auto c = tiny_config();
  const auto ps = model::init_parameters(c, 8);
  const auto mel = random_mel(9, 9);
  ad::Tape<double> td;
  const auto d = run_forward<double>(td, c, ps, mel, std::vector<double>(9, 1.0));
  const auto f = model::predict(c, ps, mel);
  EXPECT_NEAR(f.utterance_score, d.utterance_score.item(), 1e-5);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(f.emotion_probs[k], d.emotion_probs.value()[k], 1e-5);
}

TEST(Forward, InferenceIsDeterministicAndDropoutOnlyActsInTraining) {
  const auto c = tiny_config();
  const auto ps = model::init_parameters(c, 9);
  const auto mel = random_mel(6, 11);
  const auto a = model::predict(c, ps, mel);
  const auto b = model::predict(c, ps, mel);
  EXPECT_EQ(a.frame_scores, b.frame_scores);
  EXPECT_EQ(a.emotion_probs, b.emotion_probs);

  ad::Tape<float> tape;
  const auto bound = model::bind_parameters(tape, ps, false);
  auto x = tape.constant({6, 80}, mel.frames);
  const std::vector<float> mask(6, 1.0f);
  const auto train_a = model::forward<float>(c, bound, x, std::span<const float>(mask), {true, 1});
  const auto train_b = model::forward<float>(c, bound, x, std::span<const float>(mask), {true, 1});
  const auto train_c = model::forward<float>(c, bound, x, std::span<const float>(mask), {true, 2});
  EXPECT_EQ(train_a.utterance_score.item(), train_b.utterance_score.item());
  EXPECT_NE(train_a.utterance_score.item(), train_c.utterance_score.item());
}

TEST(Loss, TermsAddUpAndPerfectPredictionIsZero) {
  ad::Tape<double> tape;
  model::OutputVars<double> out;
  out.frame_scores = tape.variable({3}, {0.6, 0.6, 0.6});
  out.utterance_score = tape.variable({1}, {0.6});
  out.emotion_probs = tape.variable({4}, {0.0, 0.0, 1.0, 0.0});
  const std::vector<double> one_hot{0, 0, 1, 0};
  const std::vector<double> mask(3, 1.0);
  const auto l = model::total_loss<double>(out, 0.6, std::span<const double>(one_hot), std::span<const double>(mask));
  EXPECT_EQ(l.total.item(), 0.0);
  EXPECT_EQ(l.frame.item(), 0.0);
  EXPECT_EQ(l.utterance.item(), 0.0);
  EXPECT_EQ(l.category.item(), 0.0);
}

TEST(Loss, ConstantOffsetCostsItsMagnitude) {
  for (double offset : {-0.25, 0.1, 0.4}) {
    ad::Tape<double> tape;
    model::OutputVars<double> out;
    out.frame_scores = tape.variable({4}, std::vector<double>(4, 0.5 + offset));
    out.utterance_score = tape.variable({1}, {0.5 + offset});
    out.emotion_probs = tape.variable({4}, {0.1, 0.2, 0.3, 0.4});
    const std::vector<double> one_hot{0, 1, 0, 0};
    const std::vector<double> mask(4, 1.0);
    const auto l =
        model::total_loss<double>(out, 0.5, std::span<const double>(one_hot), std::span<const double>(mask));
    EXPECT_NEAR(l.frame.item(), std::abs(offset), 1e-15);
    EXPECT_NEAR(l.utterance.item(), std::abs(offset), 1e-15);
    EXPECT_NEAR(l.category.item(), -std::log(0.2), 1e-15);
    EXPECT_NEAR(l.total.item(), l.frame.item() + l.utterance.item() + l.category.item(), 1e-7);
  }
}

TEST(Loss, WrongClassCountIsRejected) {
  ad::Tape<double> tape;
  model::OutputVars<double> out;
  out.frame_scores = tape.variable({1}, {0.5});
  out.utterance_score = tape.variable({1}, {0.5});
  out.emotion_probs = tape.variable({4}, {0.25, 0.25, 0.25, 0.25});
  const std::vector<double> one_hot{0, 1, 0};
  const std::vector<double> mask(1, 1.0);
  EXPECT_EQ(error_of([&] {
              model::total_loss<double>(out, 0.5, std::span<const double>(one_hot), std::span<const double>(mask));
            }),
            sn::ErrorCode::kShapeMismatch);
}

TEST(Gradient, TinyModelLossMatchesFiniteDifferences) {
  const auto c = fixture::model_loss_case(4, 21, tiny_config());
  ad::GradCheckOptions opt;
  opt.step = 1e-5;
  opt.max_coordinates = 4;
  const auto r = ad::gradient_check(c.loss, c.inputs, 3, opt);
  EXPECT_GE(r.coordinates_checked, c.inputs.size());
  EXPECT_LT(r.max_relative_error, 1e-3);
}

TEST(Checkpoint, RoundTripGivesBitIdenticalInference) {
  const auto c = tiny_config();
  const auto ps = model::init_parameters(c, 12);
  sn::audio::NormStats stats{std::vector<float>(80, 0.5f), std::vector<float>(80, 2.0f)};
  const auto dir = oracle::scratch_dir("checkpoint");
  model::save_checkpoint(dir / "m.ckpt", ps, c, stats);
  const auto ck = model::load_checkpoint(dir / "m.ckpt", &c);
  EXPECT_EQ(ck.config, c);
  EXPECT_EQ(ck.params, ps);
  ASSERT_TRUE(ck.norm_stats.has_value());
  EXPECT_EQ(ck.norm_stats->mean, stats.mean);
  EXPECT_EQ(ck.norm_stats->stddev, stats.stddev);
  const auto mel = random_mel(7, 13);
  const auto a = model::predict(c, ps, mel);
  const auto b = model::predict(ck.config, ck.params, mel);
  EXPECT_EQ(a.frame_scores, b.frame_scores);
  EXPECT_EQ(a.emotion_probs, b.emotion_probs);
  EXPECT_EQ(model::encode_checkpoint(ck.params, ck.config, ck.norm_stats), sn::io::read_file(dir / "m.ckpt"));
}

TEST(Checkpoint, NormStatsAreOptional) {
  const auto c = tiny_config();
  const auto ck = model::decode_checkpoint(model::encode_checkpoint(model::init_parameters(c, 1), c, std::nullopt));
  EXPECT_FALSE(ck.norm_stats.has_value());
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto c = tiny_config();
  const auto bytes = model::encode_checkpoint(model::init_parameters(c, 1), c, std::nullopt);
  EXPECT_EQ(error_of([&] { model::decode_checkpoint(bytes.substr(0, bytes.size() - 1)); }),
            sn::ErrorCode::kCorruptCheckpoint);
  EXPECT_EQ(error_of([&] { model::decode_checkpoint(bytes + "x"); }), sn::ErrorCode::kCorruptCheckpoint);
  auto bad_magic = bytes;
  bad_magic[1] = 'X';
  EXPECT_EQ(error_of([&] { model::decode_checkpoint(bad_magic); }), sn::ErrorCode::kCorruptCheckpoint);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_EQ(error_of([&] { model::decode_checkpoint(bad_version); }), sn::ErrorCode::kVersionMismatch);
}

TEST(Checkpoint, MismatchedExpectedConfigIsRejected) {
  const auto c = tiny_config();
  const auto bytes = model::encode_checkpoint(model::init_parameters(c, 1), c, std::nullopt);
  auto other = c;
  other.bilstm_hidden = 16;
  EXPECT_EQ(error_of([&] { model::decode_checkpoint(bytes, &other); }), sn::ErrorCode::kShapeMismatch);
  EXPECT_EQ(error_of([&] { model::load_checkpoint(oracle::scratch_dir("missing_ckpt") / "none.ckpt"); }),
            sn::ErrorCode::kIoError);
}
