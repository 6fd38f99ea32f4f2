#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace picard;

namespace {

Image ramp(std::size_t n) {
  Image img(n, n);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i);
  return img;
}

std::shared_ptr<const InpainterModel<float>> random_model(std::uint64_t seed) {
  Stream rng(seed);
  return std::make_shared<const InpainterModel<float>>(init_model<float>(default_architecture(), rng));
}

}  // namespace

TEST(SplitPatch, RampCenter) {
  const auto t = split_patch(ramp(4), 2);
  ASSERT_EQ(t.center.height, 2u);
  EXPECT_EQ(t.center.pixels, (std::vector<float>{5, 6, 9, 10}));
  EXPECT_EQ(t.surroundings.at(1, 1), kHoleFill);
  EXPECT_EQ(t.surroundings.at(0, 0), 0.0f);
  EXPECT_EQ(t.hole, (Rect{1, 1, 2, 2}));
}

TEST(SplitPatch, RejectsMaskAsLargeAsPatchOrOddOffset) {
  EXPECT_THROW(split_patch(ramp(4), 4), ConfigError);
  EXPECT_THROW(split_patch(ramp(4), 5), ConfigError);
  EXPECT_THROW(split_patch(ramp(5), 2), ConfigError);
}

TEST(SplitPatch, FullScaleOffset) {
  const auto hole = centered_hole(256, 128);
  EXPECT_EQ(hole.y, 64u);
  EXPECT_EQ(hole.x, 64u);
}

TEST(SplitPatch, ReassembleIsExact) {
  Stream rng(3);
  for (std::size_t d_p : {4u, 8u, 64u})
    for (std::size_t d_m = 2; d_m < d_p; d_m += 2) {
      const auto img = picard::testing::random_image(d_p, d_p, rng);
      const auto t = split_patch(img, d_m);
      EXPECT_EQ(reassemble(t.center, t.surroundings, t.hole), img);
    }
}

TEST(NetworkInput, HoleZeroedAndMaskChannelSet) {
  const auto t = split_patch(ramp(4), 2);
  const auto in = t.network_input();
  EXPECT_EQ(in(0, 0, 1, 1), 0.0f);
  EXPECT_EQ(in(0, 1, 1, 1), 1.0f);
  EXPECT_EQ(in(0, 1, 0, 0), 0.0f);
  EXPECT_EQ(in(0, 0, 3, 3), 15.0f);
}

TEST(DropoutSampler, ProducesDistinctCompletions) {
  Stream rng(5);
  const auto t = split_patch(picard::testing::random_image(64, 64, rng), 32);
  DropoutSampler s(random_model(1), 0.5);
  const auto set = sample_completions(s, t, 10, StreamKey{7, 3});
  ASSERT_EQ(set.size(), 10u);
  std::size_t distinct_pairs = 0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = i + 1; j < 10; ++j) distinct_pairs += !(set.completions[i] == set.completions[j]);
  EXPECT_GE(distinct_pairs, 1u);
  for (const auto& c : set.completions) {
    EXPECT_EQ(c.height, 32u);
    EXPECT_EQ(c.width, 32u);
  }
}

TEST(DropoutSampler, StreamKeyDeterminesSamples) {
  Stream rng(6);
  const auto t = split_patch(picard::testing::random_image(64, 64, rng), 32);
  DropoutSampler s(random_model(2), 0.5);
  const auto a = sample_completions(s, t, 4, StreamKey{7, 3});
  const auto b = sample_completions(s, t, 4, StreamKey{7, 3});
  const auto c = sample_completions(s, t, 4, StreamKey{7, 4});
  EXPECT_EQ(a.completions, b.completions);
  EXPECT_NE(a.completions, c.completions);
  // Completion i does not depend on how many others were requested.
  const auto two = sample_completions(s, t, 2, StreamKey{7, 3});
  EXPECT_EQ(two.completions[1], a.completions[1]);
}

TEST(DeterministicSampler, SingleCompletionIsRepeatable) {
  Stream rng(7);
  const auto t = split_patch(picard::testing::random_image(64, 64, rng), 32);
  DeterministicSampler s(random_model(3));
  EXPECT_EQ(sample_completions(s, t, 1, StreamKey{1, 0}).completions,
            sample_completions(s, t, 1, StreamKey{99, 5}).completions);
  EXPECT_THROW(sample_completions(s, t, 2, StreamKey{}), UsageError);
  EXPECT_THROW(sample_completions(s, t, 0, StreamKey{}), UsageError);
}

TEST(DeterministicSampler, MatchesDropoutSamplerAtZeroProbability) {
  Stream rng(8);
  const auto t = split_patch(picard::testing::random_image(64, 64, rng), 32);
  const auto model = random_model(4);
  DeterministicSampler det(model);
  DropoutSampler drop(model, 0.0);
  EXPECT_EQ(sample_completions(det, t, 1, StreamKey{}).completions[0],
            sample_completions(drop, t, 1, StreamKey{}).completions[0]);
}

TEST(OracleSampler, ZeroVarianceRepeatsMean) {
  const std::vector<double> mean{0.5, -1.0, 2.0, 0.25};
  OracleSampler s(mean, 0.0, 2, 2);
  const auto t = split_patch(ramp(4), 2);
  const auto set = sample_completions(s, t, 5, StreamKey{});
  for (const auto& c : set.completions) EXPECT_EQ(c.pixels, (std::vector<float>{0.5f, -1.0f, 2.0f, 0.25f}));
}

TEST(OracleSampler, MomentsOfStandardNormal) {
  OracleSampler s({0.0}, 1.0);
  Stream rng(1337);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = s.draw(rng)[0];
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(OracleSampler, IdenticalStreamsIdenticalSequences) {
  OracleSampler s({1.0, 2.0}, 0.7);
  Stream a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(s.draw(a), s.draw(b));
}

TEST(OracleSampler, RejectsNegativeStddevAndShapeMismatch) {
  EXPECT_THROW(OracleSampler({0.0}, -1.0), ConfigError);
  EXPECT_THROW(OracleSampler({0.0, 1.0}, 1.0, 3, 1), ConfigError);
  OracleSampler s({0.0}, 1.0);
  EXPECT_THROW(sample_completions(s, split_patch(ramp(4), 2), 1, StreamKey{}), ConfigError);
}
