#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "test_util.hpp"

using namespace picard;

namespace {

// O(n+ * n-) pair count, ties counting 1/2.
double brute_auc(const std::vector<float>& s, const std::vector<std::uint8_t>& l) {
  double wins = 0.0, np = 0.0, nn = 0.0;
  for (auto v : l) (v ? np : nn) += 1.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (l[i])
      for (std::size_t j = 0; j < s.size(); ++j)
        if (!l[j]) wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
  return wins / (np * nn);
}

// Enumerates every distinct threshold t (high to low); predicted positive iff score >= t.
double brute_ap(const std::vector<float>& s, const std::vector<std::uint8_t>& l) {
  std::set<float, std::greater<>> thresholds(s.begin(), s.end());
  std::size_t n_pos = 0;
  for (auto v : l) n_pos += v;
  double ap = 0.0;
  std::size_t prev_tp = 0;
  for (float t : thresholds) {
    std::size_t tp = 0, predicted = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) {
        ++predicted;
        tp += l[i];
      }
    ap += static_cast<double>(tp - prev_tp) / static_cast<double>(n_pos) *
          (static_cast<double>(tp) / static_cast<double>(predicted));
    prev_tp = tp;
  }
  return ap;
}

}  // namespace

TEST(BoxesToLabels, Examples) {
  const auto l = boxes_to_labels({"a", {{0, 0, 1, 1}}}, 4, 4);
  EXPECT_EQ(l.n_positive, 4u);
  EXPECT_EQ(l.n_negative, 12u);
  EXPECT_EQ(l.positive[0], 1);
  EXPECT_EQ(l.positive[5], 1);
  EXPECT_EQ(l.positive[2], 0);

  const auto u = boxes_to_labels({"b", {{0, 0, 2, 2}, {1, 1, 3, 3}}}, 4, 4);
  EXPECT_EQ(u.n_positive, 9u + 9u - 4u);

  const auto all = boxes_to_labels({"c", {{0, 0, 3, 3}}}, 4, 4);
  EXPECT_EQ(all.n_negative, 0u);
  EXPECT_THROW(pixel_auc(Image(4, 4), all), UndefinedMetric);
}

TEST(BoxesToLabels, OutOfBoundsNamesBox) {
  try {
    boxes_to_labels({"img7", {{2, 0, 4, 1}}}, 4, 4);
    FAIL();
  } catch (const AnnotationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,0,4,1)"), std::string::npos);
    EXPECT_NE(msg.find("img7"), std::string::npos);
  }
  EXPECT_THROW(boxes_to_labels({"x", {{-1, 0, 1, 1}}}, 4, 4), AnnotationError);
  EXPECT_THROW(boxes_to_labels({"x", {{2, 0, 1, 1}}}, 4, 4), AnnotationError);
}

TEST(PixelAuc, Examples) {
  const std::vector<std::uint8_t> l{0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(pixel_auc(std::vector<float>{0.1f, 0.9f, 0.4f, 0.8f}, l), 0.75);
  EXPECT_DOUBLE_EQ(pixel_auc(std::vector<float>{0, 1, 1, 0}, l), 1.0);
  EXPECT_DOUBLE_EQ(pixel_auc(std::vector<float>(4, 0.3f), l), 0.5);
  EXPECT_THROW(pixel_auc(std::vector<float>(4, 0.0f), std::vector<std::uint8_t>(4, 1)), UndefinedMetric);
  EXPECT_THROW(pixel_auc(std::vector<float>(4, 0.0f), std::vector<std::uint8_t>(4, 0)), UndefinedMetric);
}

TEST(AveragePrecision, Examples) {
  const std::vector<std::uint8_t> l{0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(average_precision(std::vector<float>{0, 1, 1, 0}, l), 1.0);
  const std::vector<float> s{0.1f, 0.9f, 0.4f, 0.8f};
  EXPECT_EQ(average_precision(s, l), brute_ap(s, l));
  EXPECT_DOUBLE_EQ(average_precision(s, l), 0.5 * 1.0 + 0.5 * (2.0 / 3.0));
  // One tie block: precision equals prevalence.
  const std::vector<std::uint8_t> l5{1, 0, 0, 0, 1};
  EXPECT_DOUBLE_EQ(average_precision(std::vector<float>(5, 0.7f), l5), 0.4);
  EXPECT_THROW(average_precision(s, std::vector<std::uint8_t>(4, 0)), UndefinedMetric);
}

TEST(Oracles, RandomInstancesMatchExactly) {
  Stream rng(1337);
  std::uniform_int_distribution<std::size_t> dim(2, 32);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = dim(rng) * dim(rng);
    // Coarse score levels force many ties.
    std::uniform_int_distribution<int> level(0, inst % 2 ? 5 : 1000);
    std::vector<float> s(n);
    std::vector<std::uint8_t> l(n);
    for (auto& v : s) v = static_cast<float>(level(rng)) / 7.0f;
    for (auto& v : l) v = std::bernoulli_distribution(0.2)(rng);
    l[0] = 1;
    l[1] = 0;
    EXPECT_EQ(pixel_auc(s, l), brute_auc(s, l)) << inst;
    EXPECT_EQ(average_precision(s, l), brute_ap(s, l)) << inst;
  }
}

TEST(Properties, SwapClassesAndMonotoneTransform) {
  Stream rng(3);
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<float> s(200);
    std::vector<std::uint8_t> l(200), swapped(200);
    for (auto& v : s) v = static_cast<float>(std::uniform_int_distribution<int>(0, 20)(rng));
    for (std::size_t i = 0; i < l.size(); ++i) {
      l[i] = std::bernoulli_distribution(0.3)(rng);
      swapped[i] = !l[i];
    }
    l[0] = 1;
    l[1] = 0;
    swapped[0] = 0;
    swapped[1] = 1;
    const double auc = pixel_auc(s, l);
    EXPECT_NEAR(pixel_auc(s, swapped), 1.0 - auc, 1e-12);
    std::vector<float> t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(s[i] / 4.0f) + 3.0f;
    EXPECT_EQ(pixel_auc(t, l), auc);
    EXPECT_EQ(average_precision(t, l), average_precision(s, l));
  }
}

TEST(AveragePrecision, PrevalenceIsNotALowerBound) {
  // Positives ranked last: AP = 1/2 * 1/3 + 1/2 * 2/4 = 5/12 < 1/2.
  const std::vector<std::uint8_t> l{0, 0, 1, 1};
  EXPECT_NEAR(average_precision(std::vector<float>{4, 3, 2, 1}, l), 5.0 / 12.0, 1e-12);
  // A single all-tied block gives exactly the prevalence.
  EXPECT_NEAR(average_precision(std::vector<float>{1, 1, 1, 1}, l), 0.5, 1e-12);
}

TEST(AveragePrecision, OneIffPerfectSeparation) {
  const std::vector<std::uint8_t> l{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(average_precision(std::vector<float>{3, 2, 1, 0}, l), 1.0);
  EXPECT_LT(average_precision(std::vector<float>{3, 1, 1, 0}, l), 1.0);
}

TEST(DatasetEval, MeansAndPairing) {
  // Image a: the positive beats 4 of 5 negatives; image b: 9 of 10.
  Image a(1, 6);
  a.pixels = {0.9f, 0.1f, 0.2f, 0.3f, 1.0f, 0.4f};
  const BoxAnnotation aa{"a", {{0, 0, 0, 0}}};
  Image b(1, 11);
  b.pixels = {0.55f, 0.0f, 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.07f, 0.05f, 0.06f};
  const BoxAnnotation bb{"b", {{0, 0, 0, 0}}};
  const std::vector<NamedHeatmap> maps{{"b", b}, {"a", a}};
  const std::vector<BoxAnnotation> anns{aa, bb};
  const auto m = dataset_eval(maps, anns);
  ASSERT_EQ(m.images.size(), 2u);
  EXPECT_EQ(m.images[0].id, "a");
  EXPECT_DOUBLE_EQ(m.images[0].auc, 0.8);
  EXPECT_DOUBLE_EQ(m.images[1].auc, 0.9);
  EXPECT_DOUBLE_EQ(m.mean_auc, 0.85);
  EXPECT_DOUBLE_EQ(m.mean_ap, (m.images[0].ap + m.images[1].ap) / 2.0);

  const std::vector<NamedHeatmap> one{{"a", a}};
  const std::vector<BoxAnnotation> one_ann{aa};
  const auto single = dataset_eval(one, one_ann);
  EXPECT_EQ(single.mean_auc, single.images[0].auc);
  EXPECT_EQ(single.mean_ap, single.images[0].ap);

  const std::vector<NamedHeatmap> extra{{"a", a}, {"zz", a}};
  try {
    dataset_eval(extra, anns);
    FAIL();
  } catch (const PairingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("zz"), std::string::npos);
    EXPECT_NE(msg.find("b"), std::string::npos);
  }
}

TEST(BoxesCsv, RoundTripAndHeaderRequired) {
  const std::vector<BoxAnnotation> anns{{"test_0000", {{1, 2, 3, 4}, {5, 6, 7, 8}}}, {"test_0001", {{0, 0, 9, 9}}}};
  std::stringstream ss;
  write_boxes_csv(ss, anns);
  const auto back = read_boxes_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].image_id, "test_0000");
  EXPECT_EQ(back[0].boxes, anns[0].boxes);
  EXPECT_EQ(back[1].boxes, anns[1].boxes);
  std::stringstream bad("test_0000,1,2,3,4\n");
  EXPECT_THROW(read_boxes_csv(bad), FormatError);
  std::stringstream junk("image,xmin,ymin,xmax,ymax\na,1,2,x,4\n");
  EXPECT_THROW(read_boxes_csv(junk), FormatError);
}
