#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "picard/error.hpp"
#include "picard/inpaint.hpp"
#include "picard/model.hpp"
#include "picard/random.hpp"
#include "picard/tensor.hpp"

namespace picard {

// A window split into its hidden center and the visible surroundings.
struct PatchTriple {
  Image full;          // I, d_p x d_p
  Image center;        // I_c, d_m x d_m ground truth
  Image surroundings;  // I_m, d_p x d_p with the center set to the hole fill
  Rect hole;           // center square inside the patch

  Tensor4<float> network_input() const {
    Tensor4<float> t(1, 2, surroundings.height, surroundings.width);
    write_masked_input(surroundings, hole, t, 0);
    return t;
  }
};

inline Rect centered_hole(std::size_t d_p, std::size_t d_m) {
  if (d_m < 1 || d_m >= d_p) throw ConfigError("mask size must satisfy 1 <= d_m < d_p");
  if ((d_p - d_m) % 2 != 0) throw ConfigError("d_p - d_m must be even for a centered mask");
  const auto off = (d_p - d_m) / 2;
  return {off, off, d_m, d_m};
}

inline PatchTriple split_patch(const Image& patch, std::size_t d_m) {
  if (patch.height != patch.width) throw ConfigError("patch must be square");
  const Rect hole = centered_hole(patch.height, d_m);
  PatchTriple t{patch, patch.crop(hole.y, hole.x, hole.h, hole.w), patch, hole};
  for (std::size_t y = hole.y; y < hole.y + hole.h; ++y)
    for (std::size_t x = hole.x; x < hole.x + hole.w; ++x) t.surroundings.at(y, x) = kHoleFill;
  return t;
}

// Inverse of split_patch: pastes the center back into the surroundings.
inline Image reassemble(const Image& center, const Image& surroundings, const Rect& hole) {
  if (center.height != hole.h || center.width != hole.w) throw ConfigError("center does not fit hole");
  Image out = surroundings;
  for (std::size_t y = 0; y < hole.h; ++y)
    for (std::size_t x = 0; x < hole.w; ++x) out.at(hole.y + y, hole.x + x) = center.at(y, x);
  return out;
}

// Identifies the sub-streams of one patch: completion i draws from
// derive_seed(master, {kWindowSample, patch, i}).
struct StreamKey {
  std::uint64_t master = kDefaultSeed;
  std::uint64_t patch = 0;

  Stream sample_stream(std::size_t i) const {
    return make_stream(master, {stream_tag::kWindowSample, patch, static_cast<std::uint64_t>(i)});
  }
};

struct CompletionSet {
  std::vector<Image> completions;
  std::string sampler;
  StreamKey key;

  std::size_t size() const noexcept { return completions.size(); }
};

class CompletionSampler {
 public:
  virtual ~CompletionSampler() = default;
  virtual std::string name() const = 0;
  // Draws m completions of triple.center's shape. Must not mutate shared state.
  virtual CompletionSet sample(const PatchTriple& triple, std::size_t m, const StreamKey& key) const = 0;
};

inline CompletionSet sample_completions(const CompletionSampler& sampler, const PatchTriple& triple,
                                        std::size_t m, const StreamKey& key) {
  if (m < 1) throw UsageError("at least one completion (M >= 1) is required");
  return sampler.sample(triple, m, key);
}

namespace detail {
inline Image crop_completion(const Tensor4<float>& out, std::size_t n, const Rect& hole) {
  Image img(hole.h, hole.w);
  const auto w = out.shape().w;
  auto plane = out.plane(n, 0);
  for (std::size_t y = 0; y < hole.h; ++y)
    for (std::size_t x = 0; x < hole.w; ++x) img.at(y, x) = plane[(hole.y + y) * w + hole.x + x];
  return img;
}
}  // namespace detail

// Pluralistic completions from inference-time channel dropout.
class DropoutSampler : public CompletionSampler {
 public:
  DropoutSampler(std::shared_ptr<const InpainterModel<float>> model, double p_drop)
      : model_(std::move(model)), p_drop_(p_drop) {
    if (!model_) throw UsageError("dropout sampler needs a model");
    check_drop_probability(p_drop);
  }

  std::string name() const override { return "dropout"; }
  double p_drop() const noexcept { return p_drop_; }
  const InpainterModel<float>& model() const noexcept { return *model_; }

  CompletionSet sample(const PatchTriple& triple, std::size_t m, const StreamKey& key) const override {
    std::vector<Stream> streams;
    streams.reserve(m);
    for (std::size_t i = 0; i < m; ++i) streams.push_back(key.sample_stream(i));
    const auto out = inpaint_samples(*model_, triple.network_input(), p_drop_, streams);
    CompletionSet set{{}, name(), key};
    for (std::size_t i = 0; i < m; ++i) set.completions.push_back(detail::crop_completion(out, i, triple.hole));
    return set;
  }

 private:
  std::shared_ptr<const InpainterModel<float>> model_;
  double p_drop_;
};

// Single deterministic completion (dropout disabled).
class DeterministicSampler : public CompletionSampler {
 public:
  explicit DeterministicSampler(std::shared_ptr<const InpainterModel<float>> model) : model_(std::move(model)) {
    if (!model_) throw UsageError("deterministic sampler needs a model");
  }

  std::string name() const override { return "deterministic"; }
  const InpainterModel<float>& model() const noexcept { return *model_; }

  CompletionSet sample(const PatchTriple& triple, std::size_t m, const StreamKey& key) const override {
    if (m != 1) throw UsageError("deterministic sampler produces exactly one completion, requested " + std::to_string(m));
    const auto out = forward(*model_, triple.network_input());
    return {{detail::crop_completion(out, 0, triple.hole)}, name(), key};
  }

 private:
  std::shared_ptr<const InpainterModel<float>> model_;
};

// i.i.d. isotropic Gaussian completions N(mean, stddev^2 I) reshaped to rows x cols.
class OracleSampler : public CompletionSampler {
 public:
  OracleSampler(std::vector<double> mean, double stddev, std::size_t rows, std::size_t cols)
      : mean_(std::move(mean)), stddev_(stddev) {
    if (!(stddev >= 0.0)) throw ConfigError("oracle stddev must be >= 0");
    if (mean_.size() != rows * cols) throw ConfigError("oracle mean length does not match completion shape");
  }
  OracleSampler(std::vector<double> mean, double stddev)
      : OracleSampler(mean, stddev, 1, mean.size()) {}

  std::string name() const override { return "oracle"; }
  std::size_t dim() const noexcept { return mean_.size(); }

  std::vector<double> draw(Stream& rng) const {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> v(mean_.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = mean_[j] + stddev_ * z(rng);
    return v;
  }

  CompletionSet sample(const PatchTriple& triple, std::size_t m, const StreamKey& key) const override {
    if (triple.center.height * triple.center.width != mean_.size())
      throw ConfigError("oracle dimension does not match the completion region");
    CompletionSet set{{}, name(), key};
    for (std::size_t i = 0; i < m; ++i) {
      Stream rng = key.sample_stream(i);
      const auto v = draw(rng);
      Image img(triple.center.height, triple.center.width);
      for (std::size_t j = 0; j < v.size(); ++j) img.pixels[j] = static_cast<float>(v[j]);
      set.completions.push_back(std::move(img));
    }
    return set;
  }

 private:
  std::vector<double> mean_;
  double stddev_;
};

}  // namespace picard
