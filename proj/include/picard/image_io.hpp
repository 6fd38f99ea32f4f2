#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "picard/error.hpp"
#include "picard/tensor.hpp"

namespace picard {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

// libpng reports errors by longjmp; these callbacks keep the message quiet and
// the callers convert the jump into an IoError.
inline void png_fail(png_structp png, png_const_charp) { png_longjmp(png, 1); }
inline void png_warn(png_structp, png_const_charp) {}

// rows: height rows of `channels * width` samples at the given bit depth, big-endian for 16 bit.
inline void write_png(const std::filesystem::path& path, std::size_t height, std::size_t width, int color_type,
                      int bit_depth, const std::vector<std::uint8_t>& raw, std::size_t row_bytes) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (png == nullptr) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp& p;
    png_infop& i;
    ~Guard() { png_destroy_write_struct(&p, &i); }
  } guard{png, info};
  if (info == nullptr) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(png))) throw IoError("libpng failed writing " + path.string());
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) png_write_row(png, raw.data() + y * row_bytes);
  png_write_end(png, nullptr);
}

}  // namespace detail

inline std::uint16_t to_u16(float v, float lo, float hi) {
  const double t = (static_cast<double>(v) - lo) / (static_cast<double>(hi) - lo);
  return static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
}

// 16-bit grayscale PNG; [lo, hi] maps linearly onto [0, 65535].
inline void write_png16(const std::filesystem::path& path, const Image& img, float lo = -1.0f, float hi = 1.0f) {
  std::vector<std::uint8_t> raw(img.height * img.width * 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto v = to_u16(img.pixels[i], lo, hi);
    raw[2 * i] = static_cast<std::uint8_t>(v >> 8);
    raw[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
  }
  detail::write_png(path, img.height, img.width, PNG_COLOR_TYPE_GRAY, 16, raw, img.width * 2);
}

// Reads a grayscale PNG (8 or 16 bit) and maps [0, max] linearly onto [lo, hi].
inline Image read_png_gray(const std::filesystem::path& path, float lo = -1.0f, float hi = 1.0f) {
  auto file = detail::open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_fail, detail::png_warn);
  if (png == nullptr) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp& p;
    png_infop& i;
    ~Guard() { png_destroy_read_struct(&p, &i, nullptr); }
  } guard{png, info};
  if (info == nullptr) throw IoError("png_create_info_struct failed");
  std::vector<std::uint8_t> raw;
  png_uint_32 width = 0, height = 0;
  int color = 0, depth = 0;
  std::size_t row_bytes = 0;
  if (setjmp(png_jmpbuf(png))) throw IoError("libpng failed reading " + path.string());
  png_init_io(png, file.get());
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  color = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) throw FormatError(path.string() + " is not a grayscale PNG");
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  row_bytes = png_get_rowbytes(png, info);
  raw.resize(row_bytes * height);
  for (png_uint_32 y = 0; y < height; ++y) png_read_row(png, raw.data() + y * row_bytes, nullptr);
  png_read_end(png, nullptr);

  Image img(height, width);
  const bool wide = depth == 16;
  const double maxv = wide ? 65535.0 : 255.0;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const std::uint8_t* p = raw.data() + y * row_bytes + (wide ? 2 * x : x);
      const double v = wide ? static_cast<double>((p[0] << 8) | p[1]) : static_cast<double>(p[0]);
      img.at(y, x) = static_cast<float>(lo + (hi - lo) * (v / maxv));
    }
  return img;
}

// Heatmap for viewing: min-max normalized per image into 16 bits.
inline void write_heatmap_png(const std::filesystem::path& path, const Image& map) {
  const auto [mn, mx] = std::minmax_element(map.pixels.begin(), map.pixels.end());
  const float lo = map.pixels.empty() ? 0.0f : *mn;
  float hi = map.pixels.empty() ? 1.0f : *mx;
  if (!(hi > lo)) hi = lo + 1.0f;
  write_png16(path, map, lo, hi);
}

// 8-bit RGB overlay: grayscale image with the normalized heatmap blended in red.
inline void write_overlay_png(const std::filesystem::path& path, const Image& image, const Image& map,
                              float alpha = 0.5f) {
  if (image.height != map.height || image.width != map.width) throw UsageError("overlay needs equal dimensions");
  const auto [mn, mx] = std::minmax_element(map.pixels.begin(), map.pixels.end());
  const float lo = *mn, span = *mx > *mn ? *mx - *mn : 1.0f;
  std::vector<std::uint8_t> raw(image.size() * 3);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float g = std::clamp((image.pixels[i] + 1.0f) * 0.5f, 0.0f, 1.0f);
    const float h = (map.pixels[i] - lo) / span;
    const float r = (1.0f - alpha) * g + alpha * h;
    const float gb = (1.0f - alpha) * g;
    raw[3 * i] = static_cast<std::uint8_t>(std::lround(r * 255.0f));
    raw[3 * i + 1] = static_cast<std::uint8_t>(std::lround(gb * 255.0f));
    raw[3 * i + 2] = static_cast<std::uint8_t>(std::lround(gb * 255.0f));
  }
  detail::write_png(path, image.height, image.width, PNG_COLOR_TYPE_RGB, 8, raw, image.width * 3);
}

}  // namespace picard
