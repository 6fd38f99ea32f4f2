#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "picard/error.hpp"
#include "picard/inpaint.hpp"
#include "picard/model.hpp"
#include "picard/random.hpp"

namespace picard {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 16;
  std::size_t max_iterations = 3000;
  std::size_t patience = 10;        // evaluations without improvement before stopping
  std::size_t eval_interval = 50;   // iterations between evaluations
  std::size_t eval_patches = 64;    // fixed evaluation set drawn from the corpus
  // Training holes: rectangle sides uniform in [min_side, max_side]; 0 means d_m/2 and d_m.
  std::size_t min_hole_side = 0;
  std::size_t max_hole_side = 0;
  std::uint64_t seed = kDefaultSeed;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (eval_interval < 1) throw ConfigError("evaluation interval must be >= 1");
    if (eval_patches < 1) throw ConfigError("evaluation set must hold at least one patch");
  }
};

struct LossRecord {
  std::size_t iteration = 0;
  double batch_loss = 0.0;  // mean training-batch L1 since the previous record
  double eval_loss = 0.0;   // masked-region L1 on the fixed evaluation set
};

struct TrainResult {
  InpainterModel<float> model;
  std::vector<LossRecord> history;
  std::size_t iterations_run = 0;
  std::size_t best_iteration = 0;
};

// One training example: a d_p crop of a corpus image and its hole.
struct TrainingSample {
  std::size_t image = 0;
  std::size_t y = 0, x = 0;
  Rect hole;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const Architecture& arch, const TrainConfig& cfg)
      : cfg_(cfg), m_(zero_parameters<float>(arch)), v_(zero_parameters<float>(arch)) {}

  void step(Parameters<float>& params, const Parameters<float>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto lr = static_cast<float>(cfg_.learning_rate * std::sqrt(c2) / c1);
    const auto b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
    const auto eps = static_cast<float>(cfg_.epsilon * std::sqrt(c2));
    auto update = [&](std::span<float> p, std::span<const float> g, std::span<float> m, std::span<float> v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1.0f - b1) * g[i];
        v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
        p[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
      }
    };
    for (std::size_t s = 0; s < params.weights.size(); ++s) {
      update(params.weights[s].storage(), grads.weights[s].storage(), m_.weights[s].storage(),
             v_.weights[s].storage());
      update(params.biases[s], grads.biases[s], m_.biases[s], v_.biases[s]);
    }
  }

 private:
  TrainConfig cfg_;
  Parameters<float> m_, v_;
  std::size_t t_ = 0;
};

inline TrainingSample draw_training_sample(std::span<const Image> corpus, std::size_t d_p,
                                           std::size_t min_side, std::size_t max_side, Stream& rng) {
  TrainingSample s;
  s.image = std::uniform_int_distribution<std::size_t>(0, corpus.size() - 1)(rng);
  const auto& img = corpus[s.image];
  s.y = std::uniform_int_distribution<std::size_t>(0, img.height - d_p)(rng);
  s.x = std::uniform_int_distribution<std::size_t>(0, img.width - d_p)(rng);
  std::uniform_int_distribution<std::size_t> side(min_side, max_side);
  s.hole.h = side(rng);
  s.hole.w = side(rng);
  s.hole.y = std::uniform_int_distribution<std::size_t>(0, d_p - s.hole.h)(rng);
  s.hole.x = std::uniform_int_distribution<std::size_t>(0, d_p - s.hole.w)(rng);
  return s;
}

struct MaskedBatch {
  Tensor4<float> input;
  Tensor4<float> target;
  std::vector<Rect> holes;
};

inline MaskedBatch make_batch(std::span<const Image> corpus, std::span<const TrainingSample> samples,
                              std::size_t d_p) {
  MaskedBatch b{Tensor4<float>(samples.size(), 2, d_p, d_p), Tensor4<float>(samples.size(), 1, d_p, d_p), {}};
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto& s = samples[n];
    const Image patch = corpus[s.image].crop(s.y, s.x, d_p, d_p);
    write_masked_input(patch, s.hole, b.input, n);
    std::copy(patch.pixels.begin(), patch.pixels.end(), b.target.plane(n, 0).begin());
    b.holes.push_back(s.hole);
  }
  return b;
}

// Mean absolute error over hole pixels. Fills `grad` (if non-null) with dLoss/dOutput.
inline double masked_l1(const Tensor4<float>& output, const MaskedBatch& batch, Tensor4<float>* grad) {
  const auto& s = output.shape();
  std::size_t count = 0;
  for (const auto& h : batch.holes) count += h.area();
  if (grad != nullptr) *grad = Tensor4<float>(s);
  double total = 0.0;
  const float inv = 1.0f / static_cast<float>(count);
  for (std::size_t n = 0; n < s.n; ++n) {
    const auto& h = batch.holes[n];
    auto out = output.plane(n, 0);
    auto tgt = batch.target.plane(n, 0);
    for (std::size_t y = h.y; y < h.y + h.h; ++y)
      for (std::size_t x = h.x; x < h.x + h.w; ++x) {
        const float d = out[y * s.w + x] - tgt[y * s.w + x];
        total += std::abs(d);
        if (grad != nullptr) grad->plane(n, 0)[y * s.w + x] = d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
      }
  }
  return total / static_cast<double>(count);
}

// Fixed evaluation set for measuring training reconstruction error.
inline std::vector<TrainingSample> evaluation_samples(std::span<const Image> corpus, const Architecture& arch,
                                                      const TrainConfig& cfg) {
  const auto lo = cfg.min_hole_side ? cfg.min_hole_side : std::max<std::size_t>(1, arch.mask_size / 2);
  const auto hi = cfg.max_hole_side ? cfg.max_hole_side : arch.mask_size;
  Stream rng = make_stream(cfg.seed, {stream_tag::kTrainEval});
  std::vector<TrainingSample> out;
  for (std::size_t i = 0; i < cfg.eval_patches; ++i)
    out.push_back(draw_training_sample(corpus, arch.input_size, lo, hi, rng));
  return out;
}

inline double evaluate_l1(const InpainterModel<float>& model, std::span<const Image> corpus,
                          std::span<const TrainingSample> samples, std::size_t chunk = 16) {
  double weighted = 0.0;
  std::size_t pixels = 0;
  for (std::size_t i = 0; i < samples.size(); i += chunk) {
    const auto part = samples.subspan(i, std::min(chunk, samples.size() - i));
    const auto batch = make_batch(corpus, part, model.arch.input_size);
    std::size_t count = 0;
    for (const auto& h : batch.holes) count += h.area();
    weighted += masked_l1(forward(model, batch.input), batch, nullptr) * static_cast<double>(count);
    pixels += count;
  }
  return weighted / static_cast<double>(pixels);
}

// L1 of the best constant fill (the median hole pixel) on the same samples.
inline double constant_predictor_l1(std::span<const Image> corpus, std::span<const TrainingSample> samples,
                                    std::size_t d_p) {
  std::vector<float> values;
  for (const auto& s : samples) {
    const Image patch = corpus[s.image].crop(s.y, s.x, d_p, d_p);
    for (std::size_t y = s.hole.y; y < s.hole.y + s.hole.h; ++y)
      for (std::size_t x = s.hole.x; x < s.hole.x + s.hole.w; ++x) values.push_back(patch.at(y, x));
  }
  auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double median = *mid;
  double total = 0.0;
  for (float v : values) total += std::abs(v - median);
  return total / static_cast<double>(values.size());
}

using TrainProgress = std::function<void(const LossRecord&)>;

// L1 inpainting training on normal data, without dropout. Returns the parameters
// with the lowest evaluation loss seen.
inline TrainResult train_inpainter(std::span<const Image> corpus, const Architecture& arch,
                                   const TrainConfig& cfg, const TrainProgress& progress = {}) {
  cfg.validate();
  arch.validate();
  if (corpus.empty()) throw UsageError("training corpus is empty");
  for (const auto& img : corpus)
    if (img.height < arch.input_size || img.width < arch.input_size)
      throw UsageError("corpus image smaller than the patch size " + std::to_string(arch.input_size));
  if (arch.in_channels() != 2 || arch.out_channels() != 1)
    throw ConfigError("inpainter must map (image, mask) to one channel");

  Stream init_rng = make_stream(cfg.seed, {stream_tag::kInit});
  TrainResult result{init_model<float>(arch, init_rng), {}, 0, 0};
  if (cfg.max_iterations == 0) return result;

  const auto lo = cfg.min_hole_side ? cfg.min_hole_side : std::max<std::size_t>(1, arch.mask_size / 2);
  const auto hi = cfg.max_hole_side ? cfg.max_hole_side : arch.mask_size;
  if (lo > hi || hi > arch.input_size) throw ConfigError("invalid training hole side range");

  const auto eval_set = evaluation_samples(corpus, arch, cfg);
  InpainterModel<float> model = result.model;
  AdamOptimizer adam(arch, cfg);
  Stream rng = make_stream(cfg.seed, {stream_tag::kTrainBatch});

  double best = evaluate_l1(model, corpus, eval_set);
  result.history.push_back({0, best, best});
  if (progress) progress(result.history.back());
  std::size_t stale = 0;
  double batch_sum = 0.0;
  std::size_t batch_count = 0;
  std::vector<TrainingSample> samples(cfg.batch_size);
  ForwardTrace<float> trace;
  Tensor4<float> grad;

  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    for (auto& s : samples) s = draw_training_sample(corpus, arch.input_size, lo, hi, rng);
    const auto batch = make_batch(corpus, samples, arch.input_size);
    const auto out = forward(model, batch.input, nullptr, &trace);
    const double loss = masked_l1(out, batch, &grad);
    if (!std::isfinite(loss)) throw TrainingDivergence(it, "non-finite L1 loss");
    adam.step(model.params, backward(model, trace, grad));
    if (!model.params.all_finite()) throw TrainingDivergence(it, "non-finite parameters");
    batch_sum += loss;
    ++batch_count;
    result.iterations_run = it;

    if (it % cfg.eval_interval == 0 || it == cfg.max_iterations) {
      const double eval = evaluate_l1(model, corpus, eval_set);
      if (!std::isfinite(eval)) throw TrainingDivergence(it, "non-finite evaluation loss");
      result.history.push_back({it, batch_sum / static_cast<double>(batch_count), eval});
      if (progress) progress(result.history.back());
      batch_sum = 0.0;
      batch_count = 0;
      if (eval < best) {
        best = eval;
        stale = 0;
        result.model = model;
        result.best_iteration = it;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  return result;
}

}  // namespace picard
