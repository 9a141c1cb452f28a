#include <gtest/gtest.h>

#include <set>
#include <string>

#include "strengthnet/pipeline/config.hpp"
#include "strengthnet/pipeline/manifest.hpp"
#include "strengthnet/pipeline/split.hpp"
#include "support/oracles.hpp"

namespace sn = strengthnet;
namespace pl = strengthnet::pipeline;

namespace {

std::string header() { return std::string(sn::kManifestHeader) + "\n"; }

sn::ErrorCode parse_error(const std::string& text) {
  try {
    sn::parse_manifest(text);
  } catch (const sn::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "parse succeeded";
  return sn::ErrorCode::kIoError;
}

sn::CorpusManifest synthetic_manifest(const std::string& dataset, std::size_t per_emotion) {
  sn::CorpusManifest m;
  const char* emotions[] = {"neutral", "happy", "sad", "angry", "surprise"};
  for (const char* e : emotions) {
    for (std::size_t i = 0; i < per_emotion; ++i) {
      m.records.push_back({dataset + "_" + e + "_" + std::to_string(i), "w.wav", dataset, e, std::nullopt});
    }
  }
  return m;
}

std::set<std::string> ids(const sn::CorpusManifest& m) {
  std::set<std::string> out;
  for (const auto& r : m.records) out.insert(r.utterance_id);
  return out;
}

}  // namespace

TEST(Manifest, ParsesRowsWithAndWithoutStrength) {
  const auto m = sn::parse_manifest(header() + "u1\ta.wav\tesd\thappy\t0.25\nu2\tb.wav\tesd\tneutral\t\n", "/data");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.records[0].utterance_id, "u1");
  EXPECT_EQ(m.records[0].emotion, "happy");
  ASSERT_TRUE(m.records[0].strength.has_value());
  EXPECT_DOUBLE_EQ(*m.records[0].strength, 0.25);
  EXPECT_FALSE(m.records[1].strength.has_value());
  EXPECT_TRUE(m.records[1].is_neutral());
  EXPECT_EQ(m.resolve_wav(m.records[0]), std::filesystem::path("/data/a.wav"));
}

TEST(Manifest, AcceptsCrLfAndBlankLines) {
  const auto m = sn::parse_manifest(std::string(sn::kManifestHeader) + "\r\nu1\ta.wav\td\tsad\t\r\n\n");
  EXPECT_EQ(m.size(), 1u);
}

TEST(Manifest, RejectsMalformedInput) {
  EXPECT_EQ(parse_error(""), sn::ErrorCode::kParseError);
  EXPECT_EQ(parse_error("id\twav\n"), sn::ErrorCode::kParseError);
  EXPECT_EQ(parse_error(header() + "u1\ta.wav\td\thappy\n"), sn::ErrorCode::kParseError);
  EXPECT_EQ(parse_error(header() + "u1\ta.wav\td\tbored\t\n"), sn::ErrorCode::kParseError);
  EXPECT_EQ(parse_error(header() + "u1\ta.wav\t\thappy\t\n"), sn::ErrorCode::kParseError);
  EXPECT_EQ(parse_error(header() + "u1\ta.wav\td\thappy\t1.5\n"), sn::ErrorCode::kParseError);
  EXPECT_EQ(parse_error(header() + "u1\ta.wav\td\thappy\tabc\n"), sn::ErrorCode::kParseError);
  EXPECT_EQ(parse_error(header() + "u1\ta.wav\td\thappy\t\nu1\tb.wav\td\tsad\t\n"), sn::ErrorCode::kParseError);
}

TEST(Manifest, EmotionIndexFollowsModelOrder) {
  EXPECT_EQ(sn::emotion_index("happy"), 0);
  EXPECT_EQ(sn::emotion_index("sad"), 1);
  EXPECT_EQ(sn::emotion_index("angry"), 2);
  EXPECT_EQ(sn::emotion_index("surprise"), 3);
  EXPECT_EQ(sn::emotion_index("neutral"), -1);
}

TEST(Manifest, FormatParseRoundTrip) {
  const auto text = header() + "u1\ta.wav\td\thappy\t0.250000\nu2\tb.wav\td\tneutral\t\n";
  EXPECT_EQ(sn::format_manifest(sn::parse_manifest(text)), text);
}

TEST(Manifest, WriteRebasesRelativePaths) {
  const auto dir = oracle::scratch_dir("manifest_rebase");
  sn::CorpusManifest m = sn::parse_manifest(header() + "u1\twavs/a.wav\td\thappy\t\n", dir / "corpus");
  sn::write_manifest(dir / "out" / "m.tsv", m);
  const auto back = sn::read_manifest(dir / "out" / "m.tsv");
  EXPECT_EQ(back.records[0].wav_path, "../corpus/wavs/a.wav");
  EXPECT_EQ(std::filesystem::weakly_canonical(back.resolve_wav(back.records[0])),
            std::filesystem::weakly_canonical(dir / "corpus" / "wavs" / "a.wav"));
}

TEST(Split, PartitionsEveryStratumByRatio) {
  const auto m = synthetic_manifest("a", 20);
  const auto s = pl::split_corpus(m, {}, 3);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
  std::set<std::string> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (const auto& id : ids(*part)) EXPECT_TRUE(all.insert(id).second) << "duplicate " << id;
  }
  EXPECT_EQ(all, ids(m));
  for (const char* e : {"neutral", "happy", "sad", "angry", "surprise"}) {
    std::size_t n = 0;
    for (const auto& r : s.test.records) n += r.emotion == e;
    EXPECT_EQ(n, 2u) << e;
  }
}

TEST(Split, DeterministicAndSeedDependent) {
  const auto m = synthetic_manifest("a", 20);
  EXPECT_EQ(ids(pl::split_corpus(m, {}, 5).test), ids(pl::split_corpus(m, {}, 5).test));
  EXPECT_NE(ids(pl::split_corpus(m, {}, 5).test), ids(pl::split_corpus(m, {}, 6).test));
}

TEST(Split, DatasetSplitsIdenticallyAloneOrFused) {
  const auto a = synthetic_manifest("a", 10);
  const auto b = synthetic_manifest("b", 10);
  const std::vector<sn::CorpusManifest> both{a, b};
  const auto fused = pl::split_corpus(pl::fuse(both), {}, 9);
  const auto alone = pl::split_corpus(a, {}, 9);
  std::set<std::string> fused_a_test;
  for (const auto& r : fused.test.records) {
    if (r.dataset_id == "a") fused_a_test.insert(r.utterance_id);
  }
  EXPECT_EQ(fused_a_test, ids(alone.test));
}

TEST(Split, EmptyCorpusIsRejected) {
  try {
    pl::split_corpus({}, {}, 0);
    FAIL();
  } catch (const sn::Error& e) {
    EXPECT_EQ(e.code(), sn::ErrorCode::kEmptyManifest);
  }
}

TEST(Fuse, ResolvesPathsAndRejectsDuplicateIds) {
  auto a = sn::parse_manifest(header() + "u1\tx.wav\ta\thappy\t\n", "/root_a");
  auto b = sn::parse_manifest(header() + "u2\tx.wav\tb\thappy\t\n", "/root_b");
  const std::vector<sn::CorpusManifest> both{a, b};
  const auto fused = pl::fuse(both);
  EXPECT_EQ(fused.records[0].wav_path, "/root_a/x.wav");
  EXPECT_EQ(fused.records[1].wav_path, "/root_b/x.wav");
  const std::vector<sn::CorpusManifest> twice{a, a};
  EXPECT_THROW(pl::fuse(twice), sn::Error);
}

TEST(RunConfig, DefaultsMatchTrainingRecipe) {
  const pl::RunConfig cfg = pl::parse_run_config("");
  EXPECT_EQ(cfg.training.batch_size, 64u);
  EXPECT_DOUBLE_EQ(cfg.training.lr, 1e-4);
  EXPECT_DOUBLE_EQ(cfg.training.beta1, 0.9);
  EXPECT_DOUBLE_EQ(cfg.training.beta2, 0.98);
  EXPECT_EQ(cfg.training.patience, 30u);
  EXPECT_EQ(cfg.training.split_ratio.train, 8u);
  EXPECT_EQ(cfg.model.mel_channels, 80u);
  EXPECT_DOUBLE_EQ(cfg.model.dropout, 0.3);
}

TEST(RunConfig, ParsesModelAndTrainingKeys) {
  const auto cfg = pl::parse_run_config(
      "# comment\n"
      "batch_size = 8\n"
      "split_ratio = 6:2:2   # trailing comment\n"
      "bilstm_hidden=16\n"
      "conv_block_filters = 4,8\n"
      "deterministic_log = true\n"
      "kernel = 3x5\n");
  EXPECT_EQ(cfg.training.batch_size, 8u);
  EXPECT_EQ(cfg.training.split_ratio.val, 2u);
  EXPECT_EQ(cfg.model.bilstm_hidden, 16u);
  EXPECT_EQ(cfg.model.conv_block_filters, (std::vector<std::size_t>{4, 8}));
  EXPECT_TRUE(cfg.training.deterministic_log);
  EXPECT_EQ(cfg.model.kernel_freq, 5u);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(pl::parse_run_config("learning_rate = 1\n"), sn::Error);
  EXPECT_THROW(pl::parse_run_config("batch_size\n"), sn::Error);
  EXPECT_THROW(pl::parse_run_config("batch_size = many\n"), sn::Error);
  EXPECT_THROW(pl::parse_run_config("patience = 0\n"), sn::Error);
  EXPECT_THROW(pl::parse_run_config("split_ratio = 8:1\n"), sn::Error);
  EXPECT_THROW(pl::parse_run_config("dropout = 1.0\n"), sn::Error);
}
