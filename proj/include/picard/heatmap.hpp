#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "picard/error.hpp"
#include "picard/random.hpp"
#include "picard/samplers.hpp"
#include "picard/scoring.hpp"
#include "picard/tensor.hpp"

namespace picard {

struct ScoreConfig {
  std::size_t patch_size = 64;  // d_p
  std::size_t mask_size = 32;   // d_m
  std::size_t stride = 8;
  std::size_t samples = 10;     // M
  double p_drop = 0.5;
  MetricChoice metric = MetricChoice::kMin;
  EncoderKind encoder = EncoderKind::kIdentity;
  std::uint64_t seed = kDefaultSeed;
  std::size_t workers = 1;

  void validate() const {
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (mask_size < 1 || mask_size >= patch_size) throw ConfigError("mask size must satisfy 1 <= d_m < d_p");
    if ((patch_size - mask_size) % 2 != 0) throw ConfigError("d_p - d_m must be even");
    if (samples < 1) throw ConfigError("M must be >= 1");
    check_drop_probability(p_drop);
    if (workers < 1) throw ConfigError("worker count must be >= 1");
  }
};

struct WindowOrigin {
  std::size_t row = 0, col = 0;
  friend bool operator==(const WindowOrigin&, const WindowOrigin&) = default;
};

struct RasterGrid {
  std::size_t rows = 0, cols = 0;
  std::vector<WindowOrigin> origins;  // raster order
  std::size_t size() const noexcept { return origins.size(); }
};

struct AnomalyHeatmap {
  Image coarse;  // rows x cols, one score per window center
  Image full;    // source resolution
  std::size_t stride = 0;
  double anchor_offset = 0.0;  // pixel coordinate of coarse cell 0
};

// Full-fit windows of size d_p on a regular lattice from (0, 0); no partial windows.
inline RasterGrid raster_windows(std::size_t height, std::size_t width, std::size_t d_p, std::size_t stride) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (height < d_p) throw UsageError("image height " + std::to_string(height) + " is smaller than patch size " + std::to_string(d_p));
  if (width < d_p) throw UsageError("image width " + std::to_string(width) + " is smaller than patch size " + std::to_string(d_p));
  RasterGrid g;
  g.rows = (height - d_p) / stride + 1;
  g.cols = (width - d_p) / stride + 1;
  g.origins.reserve(g.rows * g.cols);
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) g.origins.push_back({r * stride, c * stride});
  return g;
}

inline std::unique_ptr<CompletionSampler> make_sampler(std::shared_ptr<const InpainterModel<float>> model,
                                                       const ScoreConfig& cfg) {
  if (cfg.samples == 1) return std::make_unique<DeterministicSampler>(std::move(model));
  return std::make_unique<DropoutSampler>(std::move(model), cfg.p_drop);
}

inline Encoder make_encoder(std::shared_ptr<const InpainterModel<float>> model, const ScoreConfig& cfg) {
  if (cfg.encoder == EncoderKind::kTrunkFeatures) return Encoder::trunk(std::move(model));
  return Encoder::identity(cfg.mask_size, cfg.mask_size);
}

// Anomaly score of one window's center region. Sub-streams are keyed by the
// window's raster index, so the score does not depend on who computes it.
inline double score_window(const Image& image, const WindowOrigin& origin, std::size_t window_index,
                           const ScoreConfig& cfg, const CompletionSampler& sampler, const Encoder& encoder) {
  const Image patch = image.crop(origin.row, origin.col, cfg.patch_size, cfg.patch_size);
  const PatchTriple triple = split_patch(patch, cfg.mask_size);
  const auto set = sample_completions(sampler, triple, cfg.samples, StreamKey{cfg.seed, window_index});
  const FeatureVector gt = encoder.encode(triple.center);
  std::vector<FeatureVector> feats;
  feats.reserve(set.size());
  for (const auto& c : set.completions) feats.push_back(encoder.encode(c));
  return completion_score(cfg.metric, gt, feats);
}

namespace detail {

// Catmull-Rom (a = -0.5) weights for taps at offsets -1, 0, 1, 2.
inline std::array<double, 4> catmull_rom_weights(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t),
          0.5 * (t3 - t2)};
}

struct Taps {
  std::array<std::size_t, 4> index{};
  std::array<double, 4> weight{};
};

// Taps for pixel coordinate p given anchors at offset + k*stride, k in [0, n).
inline Taps taps_for(double p, double offset, double stride, std::size_t n) {
  const double last = static_cast<double>(n - 1);
  const double u = std::clamp((p - offset) / stride, 0.0, last);
  const double base = std::min(std::floor(u), std::max(0.0, last - 1.0));
  const double t = u - base;
  Taps taps;
  taps.weight = catmull_rom_weights(t);
  const auto b = static_cast<std::ptrdiff_t>(base);
  for (std::ptrdiff_t k = 0; k < 4; ++k)
    taps.index[static_cast<std::size_t>(k)] =
        static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b - 1 + k, 0, static_cast<std::ptrdiff_t>(n) - 1));
  return taps;
}

}  // namespace detail

// Separable Catmull-Rom upsampling of a coarse grid whose cell (r, c) sits at
// pixel (offset + r*stride, offset + c*stride). Edges replicate; no clamping of values.
inline Image upsample_bicubic(const Image& coarse, std::size_t height, std::size_t width, double offset,
                              double stride) {
  if (coarse.height == 0 || coarse.width == 0) throw UsageError("empty coarse grid");
  std::vector<detail::Taps> xtaps(width);
  for (std::size_t x = 0; x < width; ++x)
    xtaps[x] = detail::taps_for(static_cast<double>(x), offset, stride, coarse.width);
  Image full(height, width);
  std::vector<double> row(coarse.width);
  for (std::size_t y = 0; y < height; ++y) {
    const auto yt = detail::taps_for(static_cast<double>(y), offset, stride, coarse.height);
    for (std::size_t c = 0; c < coarse.width; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 4; ++k) acc += yt.weight[k] * coarse.at(yt.index[k], c);
      row[c] = acc;
    }
    for (std::size_t x = 0; x < width; ++x) {
      const auto& xt = xtaps[x];
      double acc = 0.0;
      for (std::size_t k = 0; k < 4; ++k) acc += xt.weight[k] * row[xt.index[k]];
      full.at(y, x) = static_cast<float>(acc);
    }
  }
  return full;
}

inline AnomalyHeatmap assemble_and_upsample(std::span<const double> scores, const RasterGrid& grid,
                                            std::size_t height, std::size_t width, const ScoreConfig& cfg) {
  if (scores.size() != grid.size())
    throw UsageError("got " + std::to_string(scores.size()) + " scores for " + std::to_string(grid.size()) + " windows");
  AnomalyHeatmap hm;
  hm.stride = cfg.stride;
  hm.anchor_offset = static_cast<double>(cfg.patch_size) / 2.0;
  hm.coarse = Image(grid.rows, grid.cols);
  for (std::size_t i = 0; i < scores.size(); ++i) hm.coarse.pixels[i] = static_cast<float>(scores[i]);
  hm.full = upsample_bicubic(hm.coarse, height, width, hm.anchor_offset, static_cast<double>(cfg.stride));
  for (auto& v : hm.full.pixels) v = std::max(v, 0.0f);
  return hm;
}

// Runs body(i) for i in [0, count) on `workers` threads. The first exception is rethrown.
template <typename F>
void parallel_for(std::size_t count, std::size_t workers, F&& body) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

inline AnomalyHeatmap heatmap_image(const Image& image, const ScoreConfig& cfg, const CompletionSampler& sampler,
                                    const Encoder& encoder) {
  cfg.validate();
  const auto grid = raster_windows(image.height, image.width, cfg.patch_size, cfg.stride);
  std::vector<double> scores(grid.size());
  parallel_for(grid.size(), cfg.workers, [&](std::size_t i) {
    scores[i] = score_window(image, grid.origins[i], i, cfg, sampler, encoder);
  });
  return assemble_and_upsample(scores, grid, image.height, image.width, cfg);
}

// Exact heatmap file: "PHMF", u32 version, u32 H, u32 W, H*W little-endian f32 row-major.
inline constexpr std::array<char, 4> kHeatmapMagic{'P', 'H', 'M', 'F'};
inline constexpr std::uint32_t kHeatmapVersion = 1;

inline void write_phmf(const std::filesystem::path& path, const Image& map) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kHeatmapMagic.data(), kHeatmapMagic.size());
  const std::uint32_t header[3] = {kHeatmapVersion, static_cast<std::uint32_t>(map.height),
                                   static_cast<std::uint32_t>(map.width)};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  os.write(reinterpret_cast<const char*>(map.pixels.data()), static_cast<std::streamsize>(map.pixels.size() * sizeof(float)));
  if (!os) throw IoError("failed writing " + path.string());
}

inline Image read_phmf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open heatmap " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kHeatmapMagic) throw FormatError(path.string() + " is not a PHMF heatmap");
  std::uint32_t header[3] = {};
  is.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!is) throw FormatError("truncated heatmap header in " + path.string());
  if (header[0] != kHeatmapVersion) throw FormatError("unsupported heatmap version " + std::to_string(header[0]));
  Image map(header[1], header[2]);
  is.read(reinterpret_cast<char*>(map.pixels.data()), static_cast<std::streamsize>(map.pixels.size() * sizeof(float)));
  if (!is) throw FormatError("truncated heatmap data in " + path.string());
  return map;
}

}  // namespace picard
