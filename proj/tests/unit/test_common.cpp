#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "strengthnet/common/binary_io.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/common/random.hpp"

namespace sn = strengthnet;

TEST(Error, MessageCarriesCodeName) {
  try {
    sn::fail(sn::ErrorCode::kNotWav, "bad header");
    FAIL() << "fail() returned";
  } catch (const sn::Error& e) {
    EXPECT_EQ(e.code(), sn::ErrorCode::kNotWav);
    EXPECT_STREQ(e.what(), "NotWav: bad header");
  }
}

TEST(Error, RequirePassesThroughWhenTrue) {
  EXPECT_NO_THROW(sn::require(true, sn::ErrorCode::kEmpty, "unused"));
  EXPECT_THROW(sn::require(false, sn::ErrorCode::kEmpty, "empty"), sn::Error);
}

TEST(Random, MixSeedIsOrderSensitiveAndStable) {
  EXPECT_EQ(sn::mix_seed({1, 2, 3}), sn::mix_seed({1, 2, 3}));
  EXPECT_NE(sn::mix_seed({1, 2, 3}), sn::mix_seed({3, 2, 1}));
  EXPECT_NE(sn::mix_seed({0}), sn::mix_seed({0, 0}));
}

TEST(Random, StableHashMatchesFnv1aReference) {
  // Published FNV-1a 64-bit values.
  EXPECT_EQ(sn::stable_hash(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(sn::stable_hash("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(sn::stable_hash("foobar"), 0x85944171f73967e8ull);
}

TEST(Random, Uniform01StaysInHalfOpenUnitInterval) {
  sn::Rng rng(7);
  double lo = 1, hi = 0, sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = sn::uniform01(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_LT(lo, 1e-3);
  EXPECT_GT(hi, 1 - 1e-3);
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Random, UniformIndexCoversRangeEvenly) {
  sn::Rng rng(11);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[sn::uniform_index(rng, 6)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(Random, ShuffleIsAPermutationAndSeedDeterministic) {
  std::vector<int> a(50), b;
  std::iota(a.begin(), a.end(), 0);
  b = a;
  sn::Rng r1(3), r2(3);
  sn::shuffle(std::span(a), r1);
  sn::shuffle(std::span(b), r2);
  EXPECT_EQ(a, b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  std::vector<int> identity(50);
  std::iota(identity.begin(), identity.end(), 0);
  EXPECT_NE(a, identity);
}

TEST(BinaryIo, RoundTripsScalarsSpansAndStrings) {
  sn::io::ByteWriter w;
  w.put_magic("TEST");
  w.put<std::uint32_t>(0xDEADBEEF);
  w.put<double>(-2.5);
  const std::vector<float> values{1.0f, -0.5f, 3.25f};
  w.put_span(std::span<const float>(values));
  w.put_string("hello");
  const auto bytes = w.take();

  sn::io::ByteReader r(bytes, sn::ErrorCode::kParseError);
  EXPECT_TRUE(r.magic_matches("TEST"));
  EXPECT_EQ(r.get<std::uint32_t>(), 0xDEADBEEFu);
  EXPECT_EQ(r.get<double>(), -2.5);
  EXPECT_EQ(r.get_vector<float>(3), values);
  EXPECT_EQ(r.get_string(), "hello");
  EXPECT_TRUE(r.at_end());
}

TEST(BinaryIo, IntegersAreLittleEndian) {
  sn::io::ByteWriter w;
  w.put<std::uint32_t>(0x01020304);
  const auto bytes = w.take();
  ASSERT_EQ(bytes.size(), 4u);
  EXPECT_EQ(bytes[0], '\x04');
  EXPECT_EQ(bytes[3], '\x01');
}

TEST(BinaryIo, TruncatedInputRaisesConfiguredCode) {
  const std::string bytes = "ab";
  sn::io::ByteReader r(bytes, sn::ErrorCode::kCorruptCheckpoint);
  try {
    r.get<std::uint32_t>();
    FAIL() << "read past end";
  } catch (const sn::Error& e) {
    EXPECT_EQ(e.code(), sn::ErrorCode::kCorruptCheckpoint);
  }
}

TEST(BinaryIo, MissingFileIsIoError) {
  try {
    sn::io::read_file("/nonexistent/strengthnet/file.bin");
    FAIL() << "read a missing file";
  } catch (const sn::Error& e) {
    EXPECT_EQ(e.code(), sn::ErrorCode::kIoError);
  }
}
