#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace picard;

namespace {

std::vector<Image> texture_corpus(std::size_t count, std::size_t size, std::uint64_t seed) {
  TextureParams tp;
  tp.size = size;
  std::vector<Image> out;
  for (std::size_t i = 0; i < count; ++i) {
    Stream rng = make_stream(seed, {i});
    out.push_back(gen_normal(tp, rng));
  }
  return out;
}

}  // namespace

TEST(TrainInpainter, MemorizesConstantPatches) {
  const std::vector<Image> corpus(8, Image(64, 64, 0.3f));
  TrainConfig cfg;
  cfg.max_iterations = 200;
  cfg.eval_interval = 20;
  cfg.patience = 1000;
  const auto res = train_inpainter(corpus, default_architecture(), cfg);
  ASSERT_FALSE(res.history.empty());
  // The returned model is the early-stopping checkpoint.
  const auto arch = default_architecture();
  const double final_l1 = evaluate_l1(res.model, corpus, evaluation_samples(corpus, arch, cfg));
  EXPECT_LT(final_l1, 0.01);
  EXPECT_LE(res.best_iteration, 200u);
  EXPECT_LT(final_l1, res.history.front().eval_loss);
}

TEST(TrainInpainter, ZeroIterationsReturnsInitializedModel) {
  const std::vector<Image> corpus(2, Image(64, 64, 0.0f));
  TrainConfig cfg;
  cfg.max_iterations = 0;
  const auto res = train_inpainter(corpus, default_architecture(), cfg);
  EXPECT_TRUE(res.history.empty());
  EXPECT_EQ(res.iterations_run, 0u);
  Stream rng = make_stream(cfg.seed, {stream_tag::kInit});
  EXPECT_EQ(res.model.params, init_model<float>(default_architecture(), rng).params);
}

TEST(TrainInpainter, EmptyCorpusIsUsageError) {
  EXPECT_THROW(train_inpainter({}, default_architecture(), TrainConfig{}), UsageError);
}

TEST(TrainInpainter, RejectsInvalidConfig) {
  const std::vector<Image> corpus(1, Image(64, 64));
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train_inpainter(corpus, default_architecture(), cfg), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(train_inpainter(corpus, default_architecture(), cfg), ConfigError);
}

TEST(TrainInpainter, NonFiniteCorpusDivergesWithIteration) {
  std::vector<Image> corpus(1, Image(64, 64, std::numeric_limits<float>::quiet_NaN()));
  TrainConfig cfg;
  cfg.max_iterations = 5;
  try {
    train_inpainter(corpus, default_architecture(), cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDivergence& e) {
    EXPECT_GE(e.iteration(), 1u);
  }
}

TEST(TrainInpainter, SameSeedGivesIdenticalParameters) {
  const auto corpus = texture_corpus(8, 64, 5);
  TrainConfig cfg;
  cfg.max_iterations = 10;
  cfg.eval_interval = 5;
  cfg.batch_size = 4;
  const auto a = train_inpainter(corpus, default_architecture(), cfg);
  const auto b = train_inpainter(corpus, default_architecture(), cfg);
  EXPECT_EQ(a.model.params, b.model.params);
  cfg.seed += 1;
  const auto c = train_inpainter(corpus, default_architecture(), cfg);
  EXPECT_FALSE(a.model.params == c.model.params);
}

TEST(TrainInpainter, BeatsHalfTheConstantPredictorOnTextures) {
  // 1000 patches of size 64 cropped from full-size synthetic normal images; the
  // baseline is the best constant fill evaluated on the same fixed evaluation holes.
  const auto sources = texture_corpus(50, TextureParams{}.size, 17);
  std::vector<Image> corpus;
  Stream crop_rng = make_stream(17, {999});
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto& src = sources[i % sources.size()];
    std::uniform_int_distribution<std::size_t> ry(0, src.height - 64), rx(0, src.width - 64);
    corpus.push_back(src.crop(ry(crop_rng), rx(crop_rng), 64, 64));
  }
  const TrainConfig cfg;
  const auto arch = default_architecture();
  const auto res = train_inpainter(corpus, arch, cfg);
  const auto eval_set = evaluation_samples(corpus, arch, cfg);
  const double baseline = constant_predictor_l1(corpus, eval_set, arch.input_size);
  const double final_l1 = evaluate_l1(res.model, corpus, eval_set);
  EXPECT_LT(final_l1, 0.5 * baseline) << "model " << final_l1 << " constant " << baseline;
  EXPECT_LT(res.history.back().eval_loss, res.history.front().eval_loss);
  EXPECT_TRUE(res.model.params.all_finite());
}
