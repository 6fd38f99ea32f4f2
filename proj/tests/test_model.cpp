#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace picard;
using picard::testing::gradient_check;
using picard::testing::random_small_model;
using picard::testing::random_tensor;

TEST(Architecture, DefaultShapesAndDropoutEligibility) {
  const auto arch = default_architecture();
  ASSERT_EQ(arch.stages.size(), 8u);
  EXPECT_EQ(arch.in_channels(), 2u);
  EXPECT_EQ(arch.out_channels(), 1u);
  EXPECT_EQ(arch.encoder_depth(), 4u);
  EXPECT_EQ(arch.extent_after(64, 4), 4u);
  EXPECT_EQ(arch.extent_after(64, arch.stages.size()), 64u);
  const bool expected[] = {false, true, true, true, true, true, false, false};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(arch.stages[i].dropout_eligible, expected[i]) << i;
  EXPECT_EQ(arch.stages.back().activation, Activation::kTanh);
}

TEST(Architecture, RejectsDropoutOnOuterLayers) {
  auto arch = default_architecture();
  arch.stages.front().dropout_eligible = true;
  EXPECT_THROW(arch.validate(), ConfigError);
  arch = default_architecture();
  arch.stages.back().dropout_eligible = true;
  EXPECT_THROW(arch.validate(), ConfigError);
}

TEST(Backward, LinearLayerAtMinimumHasZeroGradient) {
  // 1x1 conv, L1 loss against its own output: sign(0) = 0 everywhere.
  Architecture arch{4, 2, {{1, 1, 1, 1, 0, false, Activation::kIdentity, false}}};
  Stream rng(1);
  auto model = init_model<double>(arch, rng);
  const auto x = random_tensor<double>({1, 1, 4, 4}, rng);
  ForwardTrace<double> trace;
  const auto out = forward(model, x, nullptr, &trace);
  Tensor4<double> loss_grad(out.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = out.storage()[i] - out.storage()[i];
    loss_grad.storage()[i] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
  }
  const auto g = backward(model, trace, loss_grad);
  g.for_each([](std::span<const double> s) {
    for (double v : s) EXPECT_EQ(v, 0.0);
  });
}

TEST(Backward, ZeroSeedGivesZeroGradients) {
  Stream rng(2);
  const auto model = init_model<double>(default_architecture(16, 8, {4, 4}), rng);
  const auto x = random_tensor<double>({2, 2, 16, 16}, rng);
  ForwardTrace<double> trace;
  const auto out = forward(model, x, nullptr, &trace);
  const auto g = backward(model, trace, Tensor4<double>(out.shape()));
  g.for_each([](std::span<const double> s) {
    for (double v : s) EXPECT_EQ(v, 0.0);
  });
}

TEST(Backward, RequiresTracedForward) {
  Stream rng(3);
  const auto model = init_model<double>(default_architecture(16, 8, {4, 4}), rng);
  EXPECT_THROW(backward(model, ForwardTrace<double>{}, Tensor4<double>(1, 1, 16, 16)), UsageError);
}

TEST(Backward, GradientShapesMatchParameters) {
  Stream rng(4);
  const auto model = init_model<float>(default_architecture(), rng);
  const auto x = random_tensor<float>({1, 2, 64, 64}, rng);
  ForwardTrace<float> trace;
  const auto out = forward(model, x, nullptr, &trace);
  const auto g = backward(model, trace, Tensor4<float>(out.shape(), 1.0f));
  ASSERT_EQ(g.weights.size(), model.params.weights.size());
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    EXPECT_EQ(g.weights[i].shape(), model.params.weights[i].shape());
    EXPECT_EQ(g.biases[i].size(), model.params.biases[i].size());
  }
  EXPECT_TRUE(g.all_finite());
}

TEST(GradientCheck, TwoLayerNetOnFourByFourInput) {
  Architecture arch{4, 2,
                    {{1, 2, 3, 1, 1, false, Activation::kTanh, false},
                     {2, 1, 3, 1, 1, false, Activation::kIdentity, false}}};
  Stream rng(1337);
  auto model = init_model<double>(arch, rng);
  const auto x = random_tensor<double>({1, 1, 4, 4}, rng);
  const auto w = random_tensor<double>({1, 1, 4, 4}, rng);
  const auto rep = gradient_check(model, x, w, 0.0, 1);
  EXPECT_EQ(rep.kinks, 0u);
  EXPECT_EQ(rep.checked, model.params.count());
  EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(GradientCheck, RandomSmallNetworksIncludingDropout) {
  Stream rng(2024);
  std::size_t kinks = 0, checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t in_ch = 1 + static_cast<std::size_t>(trial % 2);
    const auto model = random_small_model(rng, 8, in_ch);
    const auto x = random_tensor<double>({1, in_ch, 8, 8}, rng);
    const auto w = random_tensor<double>({1, 1, 8, 8}, rng);
    const auto rep = gradient_check(model, x, w, trial % 3 == 0 ? 0.5 : 0.0, static_cast<std::uint64_t>(trial));
    EXPECT_LT(rep.max_rel_error, 1e-4) << "trial " << trial;
    kinks += rep.kinks;
    checked += rep.checked;
  }
  EXPECT_LT(static_cast<double>(kinks), 0.05 * static_cast<double>(checked + kinks));
}

TEST(InpaintForward, DeterministicWithoutDropout) {
  Stream rng(5);
  const auto model = init_model<float>(default_architecture(), rng);
  const auto x = masked_input(picard::testing::random_image(64, 64, rng), Rect{16, 16, 32, 32});
  Stream a(1), b(2);
  EXPECT_EQ(inpaint_forward(model, x, 0.0, a), inpaint_forward(model, x, 0.0, b));
}

TEST(InpaintForward, DropoutStreamsProduceDistinctOutputs) {
  Stream rng(6);
  const auto model = init_model<float>(default_architecture(), rng);
  int distinct = 0;
  for (int t = 0; t < 100; ++t) {
    const auto x = masked_input(picard::testing::random_image(64, 64, rng), Rect{16, 16, 32, 32});
    Stream a = make_stream(7, {static_cast<std::uint64_t>(t), 0}), b = make_stream(7, {static_cast<std::uint64_t>(t), 1});
    if (!(inpaint_forward(model, x, 0.5, a) == inpaint_forward(model, x, 0.5, b))) ++distinct;
  }
  EXPECT_EQ(distinct, 100);
}

TEST(InpaintForward, ZeroWeightsGiveConstantBiasOutput) {
  auto arch = default_architecture();
  auto model = InpainterModel<float>{arch, zero_parameters<float>(arch)};
  model.params.biases.back()[0] = 0.25f;
  Stream rng(8);
  const auto x = masked_input(picard::testing::random_image(64, 64, rng), Rect{16, 16, 32, 32});
  const auto out = inpaint_forward(model, x, 0.0, rng);
  for (float v : out.storage()) EXPECT_FLOAT_EQ(v, std::tanh(0.25f));
}

TEST(InpaintForward, RejectsWrongSpatialSize) {
  Stream rng(9);
  const auto model = init_model<float>(default_architecture(), rng);
  Tensor4<float> x(1, 2, 32, 32);
  EXPECT_THROW(inpaint_forward(model, x, 0.0, rng), ConfigError);
}

TEST(InpaintSamples, CompletionDependsOnlyOnItsOwnStream) {
  Stream rng(10);
  const auto model = init_model<float>(default_architecture(), rng);
  const auto x = masked_input(picard::testing::random_image(64, 64, rng), Rect{16, 16, 32, 32});
  std::vector<Stream> five, one;
  for (std::size_t i = 0; i < 5; ++i) five.push_back(make_stream(3, {i}));
  one.push_back(make_stream(3, {3}));
  const auto batch = inpaint_samples(model, x, 0.5, five);
  const auto single = inpaint_samples(model, x, 0.5, one);
  const auto a = batch.item(3), b = single.item(0);
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
}

TEST(Checkpoint, RoundTripsArchitectureAndParameters) {
  Stream rng(11);
  const auto model = init_model<float>(default_architecture(), rng);
  std::stringstream ss;
  write_checkpoint(ss, model);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "PICN");
  const auto back = read_checkpoint(ss);
  EXPECT_EQ(back.arch, model.arch);
  EXPECT_EQ(back.params, model.params);
}

TEST(Checkpoint, RejectsUnknownVersionAndBadMagic) {
  Stream rng(12);
  const auto model = init_model<float>(default_architecture(), rng);
  std::stringstream ss;
  write_checkpoint(ss, model);
  std::string bytes = ss.str();
  std::string bumped = bytes;
  bumped[4] = 2;
  std::stringstream v2(bumped);
  EXPECT_THROW(read_checkpoint(v2), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream b(bad);
  EXPECT_THROW(read_checkpoint(b), FormatError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), FormatError);
}
