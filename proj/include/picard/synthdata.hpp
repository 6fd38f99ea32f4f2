#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "picard/error.hpp"
#include "picard/evaluation.hpp"
#include "picard/heatmap.hpp"
#include "picard/image_io.hpp"
#include "picard/random.hpp"
#include "picard/tensor.hpp"

namespace picard {

// Band-limited "normal" texture: K oriented sinusoids plus smoothed noise.
struct TextureParams {
  std::size_t size = 256;
  std::size_t components = 8;
  double min_frequency = 2.0;  // cycles per image
  double max_frequency = 10.0;
  double min_amplitude = 0.5;
  double max_amplitude = 1.0;
  double noise_radius = 2.0;   // Gaussian smoothing sigma, pixels
  double noise_level = 0.3;    // std of the smoothed noise before rescaling

  void validate() const {
    if (size < 2) throw ConfigError("texture size must be >= 2");
    if (components < 1) throw ConfigError("texture needs at least one component");
    if (!(min_frequency > 0.0 && min_frequency <= max_frequency)) throw ConfigError("invalid frequency range");
    if (!(min_amplitude > 0.0 && min_amplitude <= max_amplitude)) throw ConfigError("invalid amplitude range");
    if (noise_radius < 0.0 || noise_level < 0.0) throw ConfigError("noise parameters must be >= 0");
  }
};

struct AnomalyParams {
  double min_radius = 6.0;  // ellipse semi-axes, pixels
  double max_radius = 34.0;
  double min_offset = 0.4;  // added intensity inside the ellipse
  double max_offset = 0.8;
  double min_frequency_scale = 2.0;
  double max_frequency_scale = 3.0;
  std::size_t min_count = 1;
  std::size_t max_count = 2;

  void validate() const {
    if (!(min_radius >= 1.0 && min_radius <= max_radius)) throw ConfigError("invalid anomaly radius range");
    if (min_offset > max_offset) throw ConfigError("invalid contrast offset range");
    if (!(min_frequency_scale > 0.0 && min_frequency_scale <= max_frequency_scale))
      throw ConfigError("invalid frequency scale range");
    if (min_count < 1 || min_count > max_count) throw ConfigError("invalid anomaly count range");
  }
};

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
  double sum = 0.0;
  for (std::ptrdiff_t i = -half; i <= half; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + half)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable blur with periodic boundaries.
inline std::vector<double> blur_periodic(const std::vector<double>& in, std::size_t n, double sigma) {
  if (sigma <= 0.0) return in;
  const auto k = gaussian_kernel(sigma);
  const auto half = static_cast<std::ptrdiff_t>(k.size() / 2);
  const auto sn = static_cast<std::ptrdiff_t>(n);
  std::vector<double> tmp(in.size()), out(in.size());
  for (std::ptrdiff_t y = 0; y < sn; ++y)
    for (std::ptrdiff_t x = 0; x < sn; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -half; i <= half; ++i)
        acc += k[static_cast<std::size_t>(i + half)] * in[static_cast<std::size_t>(y * sn + ((x + i) % sn + sn) % sn)];
      tmp[static_cast<std::size_t>(y * sn + x)] = acc;
    }
  for (std::ptrdiff_t y = 0; y < sn; ++y)
    for (std::ptrdiff_t x = 0; x < sn; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -half; i <= half; ++i)
        acc += k[static_cast<std::size_t>(i + half)] * tmp[static_cast<std::size_t>(((y + i) % sn + sn) % sn * sn + x)];
      out[static_cast<std::size_t>(y * sn + x)] = acc;
    }
  return out;
}

inline double sample_bilinear(const Image& img, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const auto y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double ty = y - static_cast<double>(y0), tx = x - static_cast<double>(x0);
  if (ty == 0.0 && tx == 0.0) return img.at(y0, x0);
  const double top = (1.0 - tx) * img.at(y0, x0) + tx * img.at(y0, x1);
  const double bot = (1.0 - tx) * img.at(y1, x0) + tx * img.at(y1, x1);
  return (1.0 - ty) * top + ty * bot;
}

}  // namespace detail

inline Image gen_normal(const TextureParams& p, Stream& rng) {
  p.validate();
  const std::size_t n = p.size;
  std::uniform_real_distribution<double> freq(p.min_frequency, p.max_frequency);
  std::uniform_real_distribution<double> amp(p.min_amplitude, p.max_amplitude);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<double> field(n * n, 0.0);
  for (std::size_t k = 0; k < p.components; ++k) {
    const double f = freq(rng), a = amp(rng), theta = angle(rng), phase = angle(rng);
    const double wy = 2.0 * std::numbers::pi * f * std::sin(theta) / static_cast<double>(n);
    const double wx = 2.0 * std::numbers::pi * f * std::cos(theta) / static_cast<double>(n);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        field[y * n + x] += a * std::sin(wy * static_cast<double>(y) + wx * static_cast<double>(x) + phase);
  }
  if (p.noise_level > 0.0) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> noise(n * n);
    for (auto& v : noise) v = z(rng);
    noise = detail::blur_periodic(noise, n, p.noise_radius);
    double sq = 0.0;
    for (double v : noise) sq += v * v;
    const double scale = p.noise_level / std::sqrt(sq / static_cast<double>(noise.size()) + 1e-300);
    for (std::size_t i = 0; i < field.size(); ++i) field[i] += scale * noise[i];
  }
  const auto [mn, mx] = std::minmax_element(field.begin(), field.end());
  const double lo = *mn, span = *mx - *mn > 0.0 ? *mx - *mn : 1.0;
  Image img(n, n);
  for (std::size_t i = 0; i < field.size(); ++i)
    img.pixels[i] = static_cast<float>(std::clamp(2.0 * (field[i] - lo) / span - 1.0, -1.0, 1.0));
  return img;
}

struct InjectedImage {
  Image image;
  BoxAnnotation annotation;
};

// Re-textures elliptical regions by spatially compressing the local texture
// around the ellipse center and adding a contrast offset. Pixels outside every
// ellipse are untouched; each box is the tight box of one modified ellipse.
inline InjectedImage inject_anomaly(const Image& image, const AnomalyParams& p, Stream& rng,
                                    const std::string& image_id = {}) {
  p.validate();
  const double h = static_cast<double>(image.height), w = static_cast<double>(image.width);
  if (2.0 * p.min_radius + 1.0 > std::min(h, w)) throw GenerationError("anomaly radius too large for the image");
  std::uniform_real_distribution<double> radius(p.min_radius, p.max_radius);
  std::uniform_real_distribution<double> offset(p.min_offset, p.max_offset);
  std::uniform_real_distribution<double> scale(p.min_frequency_scale, p.max_frequency_scale);
  std::uniform_int_distribution<std::size_t> count(p.min_count, p.max_count);

  InjectedImage out{image, {image_id, {}}};
  const std::size_t n = count(rng);
  for (std::size_t a = 0; a < n; ++a) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double ry = std::min(radius(rng), (h - 1.0) / 2.0), rx = std::min(radius(rng), (w - 1.0) / 2.0);
      const double cy = std::uniform_real_distribution<double>(ry, h - 1.0 - ry)(rng);
      const double cx = std::uniform_real_distribution<double>(rx, w - 1.0 - rx)(rng);
      const double off = offset(rng), mult = scale(rng);
      // Covered pixels satisfy rho < 1.
      const auto y0 = static_cast<long>(std::ceil(cy - ry)), y1 = static_cast<long>(std::floor(cy + ry));
      const auto x0 = static_cast<long>(std::ceil(cx - rx)), x1 = static_cast<long>(std::floor(cx + rx));
      Box box{x1, y1, x0, y0};
      for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x) {
          const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
          if (dy * dy + dx * dx < 1.0) {
            box.xmin = std::min(box.xmin, x);
            box.xmax = std::max(box.xmax, x);
            box.ymin = std::min(box.ymin, y);
            box.ymax = std::max(box.ymax, y);
          }
        }
      if (box.xmin > box.xmax) continue;
      const bool overlaps = std::any_of(out.annotation.boxes.begin(), out.annotation.boxes.end(), [&](const Box& b) {
        return !(box.xmax < b.xmin || b.xmax < box.xmin || box.ymax < b.ymin || b.ymax < box.ymin);
      });
      if (overlaps) continue;

      const Image source = out.image;
      for (long y = box.ymin; y <= box.ymax; ++y)
        for (long x = box.xmin; x <= box.xmax; ++x) {
          const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
          const double rho = std::sqrt(dy * dy + dx * dx);
          if (rho >= 1.0) continue;
          const double weight = rho <= 0.7 ? 1.0 : (1.0 - rho) / 0.3;
          const double alt = detail::sample_bilinear(source, cy + (static_cast<double>(y) - cy) * mult,
                                                     cx + (static_cast<double>(x) - cx) * mult);
          const auto yy = static_cast<std::size_t>(y), xx = static_cast<std::size_t>(x);
          const double orig = source.at(yy, xx);
          out.image.at(yy, xx) = static_cast<float>(std::clamp(orig + weight * (alt + off - orig), -1.0, 1.0));
        }
      out.annotation.boxes.push_back(box);
      placed = true;
    }
    if (!placed) throw GenerationError("could not place anomaly " + std::to_string(a) + " after 100 attempts");
  }
  return out;
}

struct CorpusParams {
  TextureParams texture;
  AnomalyParams anomaly;
};

struct ManifestEntry {
  std::string path;  // relative to the corpus directory
  std::string role;  // "train" or "test"
  std::uint64_t seed = 0;
  std::size_t n_anomalies = 0;

  std::string id() const { return std::filesystem::path(path).stem().string(); }
};

struct Manifest {
  int version = 1;
  std::uint64_t master_seed = kDefaultSeed;
  CorpusParams params;
  std::vector<ManifestEntry> entries;
};

inline constexpr int kManifestVersion = 1;

inline nlohmann::ordered_json to_json(const CorpusParams& p) {
  const auto& t = p.texture;
  const auto& a = p.anomaly;
  return {{"texture",
           {{"size", t.size},
            {"components", t.components},
            {"min_frequency", t.min_frequency},
            {"max_frequency", t.max_frequency},
            {"min_amplitude", t.min_amplitude},
            {"max_amplitude", t.max_amplitude},
            {"noise_radius", t.noise_radius},
            {"noise_level", t.noise_level}}},
          {"anomaly",
           {{"min_radius", a.min_radius},
            {"max_radius", a.max_radius},
            {"min_offset", a.min_offset},
            {"max_offset", a.max_offset},
            {"min_frequency_scale", a.min_frequency_scale},
            {"max_frequency_scale", a.max_frequency_scale},
            {"min_count", a.min_count},
            {"max_count", a.max_count}}}};
}

inline CorpusParams corpus_params_from_json(const nlohmann::json& j) {
  CorpusParams p;
  const auto& t = j.at("texture");
  const auto& a = j.at("anomaly");
  p.texture = {t.at("size"),          t.at("components"),    t.at("min_frequency"), t.at("max_frequency"),
               t.at("min_amplitude"), t.at("max_amplitude"), t.at("noise_radius"),  t.at("noise_level")};
  p.anomaly = {a.at("min_radius"), a.at("max_radius"),          a.at("min_offset"),          a.at("max_offset"),
               a.at("min_frequency_scale"), a.at("max_frequency_scale"), a.at("min_count"), a.at("max_count")};
  return p;
}

inline std::string manifest_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["version"] = m.version;
  j["master_seed"] = m.master_seed;
  j["params"] = to_json(m.params);
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : m.entries)
    j["entries"].push_back({{"path", e.path}, {"role", e.role}, {"seed", e.seed}, {"n_anomalies", e.n_anomalies}});
  return j.dump(2) + "\n";
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());
  try {
    const auto j = nlohmann::json::parse(is);
    Manifest m;
    m.version = j.at("version");
    if (m.version != kManifestVersion) throw FormatError("unsupported manifest version " + std::to_string(m.version));
    m.master_seed = j.at("master_seed");
    m.params = corpus_params_from_json(j.at("params"));
    for (const auto& e : j.at("entries"))
      m.entries.push_back({e.at("path"), e.at("role"), e.at("seed"), e.value("n_anomalies", std::size_t{0})});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
}

namespace detail {
inline std::string indexed_name(const std::string& role, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04zu.png", role.c_str(), i);
  return role + "/" + buf;
}
}  // namespace detail

inline constexpr std::uint64_t kRoleTrain = 0;
inline constexpr std::uint64_t kRoleTest = 1;

inline std::uint64_t corpus_image_seed(std::uint64_t master, std::uint64_t role, std::size_t index) {
  return derive_seed(master, {stream_tag::kCorpus, role, static_cast<std::uint64_t>(index)});
}

// Test image `index` of a corpus, in memory.
inline InjectedImage generate_test_image(const CorpusParams& params, std::uint64_t seed, const std::string& id) {
  Stream rng(seed);
  const Image base = gen_normal(params.texture, rng);
  return inject_anomaly(base, params.anomaly, rng, id);
}

inline Image generate_train_image(const CorpusParams& params, std::uint64_t seed) {
  Stream rng(seed);
  return gen_normal(params.texture, rng);
}

// Writes train/ and test/ PNGs, boxes.csv and manifest.json under `dir`.
inline Manifest build_corpus(const std::filesystem::path& dir, std::size_t n_train, std::size_t n_test,
                             const CorpusParams& params, std::uint64_t master_seed, std::size_t workers = 1) {
  if (n_train < 1 || n_test < 1) throw UsageError("corpus needs at least one train and one test image");
  params.texture.validate();
  params.anomaly.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"train", "test"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
  }
  Manifest m{kManifestVersion, master_seed, params, {}};
  for (std::size_t i = 0; i < n_train; ++i)
    m.entries.push_back({detail::indexed_name("train", i), "train", corpus_image_seed(master_seed, kRoleTrain, i), 0});
  for (std::size_t i = 0; i < n_test; ++i)
    m.entries.push_back({detail::indexed_name("test", i), "test", corpus_image_seed(master_seed, kRoleTest, i), 0});

  std::vector<BoxAnnotation> boxes(n_test);
  parallel_for(m.entries.size(), workers, [&](std::size_t k) {
    auto& e = m.entries[k];
    if (e.role == "train") {
      write_png16(dir / e.path, generate_train_image(params, e.seed));
    } else {
      auto inj = generate_test_image(params, e.seed, e.id());
      write_png16(dir / e.path, inj.image);
      e.n_anomalies = inj.annotation.boxes.size();
      boxes[k - n_train] = std::move(inj.annotation);
    }
  });
  {
    std::ofstream os(dir / "boxes.csv");
    if (!os) throw IoError("cannot write " + (dir / "boxes.csv").string());
    write_boxes_csv(os, boxes);
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << manifest_json(m);
  return m;
}

}  // namespace picard
