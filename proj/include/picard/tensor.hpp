#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "picard/error.hpp"

namespace picard {

// Cache-line aligned allocation; keeps vectorized reductions on the same code path every run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};
  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }
  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

struct Shape4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

// Dense NCHW tensor.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : Tensor4(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  AlignedVector<T>& storage() noexcept { return data_; }
  const AlignedVector<T>& storage() const noexcept { return data_; }

  T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  // One (batch, channel) plane.
  std::span<T> plane(std::size_t n, std::size_t c) noexcept {
    return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const noexcept {
    return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
  }
  // All channels of one batch element.
  std::span<T> item(std::size_t n) noexcept {
    return {data_.data() + n * shape_.c * shape_.plane(), shape_.c * shape_.plane()};
  }
  std::span<const T> item(std::size_t n) const noexcept {
    return {data_.data() + n * shape_.c * shape_.plane(), shape_.c * shape_.plane()};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor4<U> cast() const {
    Tensor4<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor4& a, const Tensor4& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape4 shape_{};
  AlignedVector<T> data_;
};

// Single-channel row-major intensity grid (an image, patch or completion).
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w, fill) {}

  float& at(std::size_t y, std::size_t x) noexcept { return pixels[y * width + x]; }
  float at(std::size_t y, std::size_t x) const noexcept { return pixels[y * width + x]; }
  std::size_t size() const noexcept { return pixels.size(); }

  Image crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const {
    if (y0 + h > height || x0 + w > width) throw ConfigError("crop exceeds image bounds");
    Image out(h, w);
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>((y0 + y) * width + x0), w,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>(y * w));
    return out;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace picard
