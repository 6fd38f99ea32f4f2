#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "picard/error.hpp"
#include "picard/model.hpp"
#include "picard/tensor.hpp"

namespace picard {

using FeatureVector = std::vector<double>;

enum class MetricChoice { kMin, kMean, kMedian };
enum class EncoderKind { kIdentity, kTrunkFeatures };

inline std::string to_string(MetricChoice m) {
  switch (m) {
    case MetricChoice::kMin: return "min";
    case MetricChoice::kMean: return "mean";
    case MetricChoice::kMedian: return "median";
  }
  return "?";
}

inline MetricChoice parse_metric(const std::string& s) {
  if (s == "min") return MetricChoice::kMin;
  if (s == "mean") return MetricChoice::kMean;
  if (s == "median") return MetricChoice::kMedian;
  throw ConfigError("unknown metric '" + s + "' (expected min, mean or median)");
}

// phi: identity (image space) or the inpainter's deepest encoder activation.
class Encoder {
 public:
  static Encoder identity(std::size_t rows, std::size_t cols) { return Encoder(rows, cols, nullptr); }

  static Encoder trunk(std::shared_ptr<const InpainterModel<float>> model) {
    if (!model) throw UsageError("trunk encoder needs a model");
    const auto d_m = model->arch.mask_size;
    return Encoder(d_m, d_m, std::move(model));
  }

  EncoderKind kind() const noexcept { return model_ ? EncoderKind::kTrunkFeatures : EncoderKind::kIdentity; }

  std::size_t output_length() const {
    if (!model_) return rows_ * cols_;
    const auto& arch = model_->arch;
    const auto depth = arch.encoder_depth();
    const auto extent = arch.extent_after(rows_, depth);
    return arch.stages[depth - 1].out_channels * extent * extent;
  }

  FeatureVector encode(const Image& completion) const {
    if (completion.height != rows_ || completion.width != cols_)
      throw ConfigError("encoder expects " + std::to_string(rows_) + "x" + std::to_string(cols_) + " input, got " +
                        std::to_string(completion.height) + "x" + std::to_string(completion.width));
    if (!model_) return FeatureVector(completion.pixels.begin(), completion.pixels.end());
    // The completion is shown to the encoder as a fully visible (hole-free) image.
    Tensor4<float> in(1, 2, rows_, cols_);
    std::copy(completion.pixels.begin(), completion.pixels.end(), in.plane(0, 0).begin());
    const auto feats = encoder_features(*model_, in);
    return FeatureVector(feats.storage().begin(), feats.storage().end());
  }

 private:
  Encoder(std::size_t rows, std::size_t cols, std::shared_ptr<const InpainterModel<float>> model)
      : rows_(rows), cols_(cols), model_(std::move(model)) {}

  std::size_t rows_, cols_;
  std::shared_ptr<const InpainterModel<float>> model_;
};

inline FeatureVector encode(const Encoder& encoder, const Image& completion) { return encoder.encode(completion); }

// Euclidean distances from the ground truth to each sample.
inline std::vector<double> completion_distances(const FeatureVector& gt, std::span<const FeatureVector> samples) {
  if (samples.empty()) throw UsageError("score needs at least one completion sample");
  std::vector<double> d;
  d.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.size() != gt.size())
      throw ConfigError("feature length mismatch: " + std::to_string(s.size()) + " vs " + std::to_string(gt.size()));
    double acc = 0.0;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const double diff = gt[j] - s[j];
      acc += diff * diff;
    }
    d.push_back(std::sqrt(acc));
  }
  return d;
}

// Minimum completion distance.
inline double mcd_score(const FeatureVector& gt, std::span<const FeatureVector> samples) {
  const auto d = completion_distances(gt, samples);
  return *std::min_element(d.begin(), d.end());
}

inline double mean_cd_score(const FeatureVector& gt, std::span<const FeatureVector> samples) {
  const auto d = completion_distances(gt, samples);
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw UsageError("median of an empty set");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double median_cd_score(const FeatureVector& gt, std::span<const FeatureVector> samples) {
  return median_of(completion_distances(gt, samples));
}

inline double completion_score(MetricChoice metric, const FeatureVector& gt, std::span<const FeatureVector> samples) {
  switch (metric) {
    case MetricChoice::kMin: return mcd_score(gt, samples);
    case MetricChoice::kMean: return mean_cd_score(gt, samples);
    case MetricChoice::kMedian: return median_cd_score(gt, samples);
  }
  throw ConfigError("unknown metric");
}

}  // namespace picard
