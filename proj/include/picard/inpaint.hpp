#pragma once

#include <span>
#include <vector>

#include "picard/error.hpp"
#include "picard/model.hpp"
#include "picard/random.hpp"
#include "picard/tensor.hpp"

namespace picard {

struct Rect {
  std::size_t y = 0, x = 0, h = 0, w = 0;

  bool contains(std::size_t py, std::size_t px) const noexcept {
    return py >= y && py < y + h && px >= x && px < x + w;
  }
  std::size_t area() const noexcept { return h * w; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

inline constexpr float kHoleFill = 0.0f;

// Writes the two-channel network input for one patch into item `n` of `out`:
// channel 0 holds the patch with the hole set to kHoleFill, channel 1 marks the hole.
template <typename T>
void write_masked_input(const Image& patch, const Rect& hole, Tensor4<T>& out, std::size_t n) {
  const auto& s = out.shape();
  if (s.c != 2 || s.h != patch.height || s.w != patch.width)
    throw ConfigError("masked input tensor does not match patch " + std::to_string(patch.height) + "x" +
                      std::to_string(patch.width));
  if (hole.y + hole.h > patch.height || hole.x + hole.w > patch.width)
    throw ConfigError("hole exceeds patch bounds");
  auto img = out.plane(n, 0);
  auto mask = out.plane(n, 1);
  for (std::size_t y = 0; y < s.h; ++y)
    for (std::size_t x = 0; x < s.w; ++x) {
      const bool in_hole = hole.contains(y, x);
      img[y * s.w + x] = in_hole ? static_cast<T>(kHoleFill) : static_cast<T>(patch.at(y, x));
      mask[y * s.w + x] = in_hole ? T(1) : T(0);
    }
}

template <typename T = float>
Tensor4<T> masked_input(const Image& patch, const Rect& hole) {
  Tensor4<T> t(1, 2, patch.height, patch.width);
  write_masked_input(patch, hole, t, 0);
  return t;
}

namespace detail {
template <typename T>
void check_inpaint_input(const InpainterModel<T>& model, const Tensor4<T>& masked) {
  const auto& s = masked.shape();
  const auto d = model.arch.input_size;
  if (s.h != d || s.w != d)
    throw ConfigError("inpainter expects " + std::to_string(d) + "x" + std::to_string(d) + " input, got " +
                      std::to_string(s.h) + "x" + std::to_string(s.w));
  if (s.c != 2) throw ConfigError("inpainter input must have image and mask channels");
}
}  // namespace detail

// One completion of a masked patch, with channel dropout drawn from `rng`.
template <typename T>
Tensor4<T> inpaint_forward(const InpainterModel<T>& model, const Tensor4<T>& masked, double p_drop,
                           Stream& rng) {
  detail::check_inpaint_input(model, masked);
  check_drop_probability(p_drop);
  if (p_drop == 0.0) return forward(model, masked);
  std::vector<Stream> streams(masked.shape().n, rng);
  // Distinct per-item streams when a batch shares one caller stream.
  for (std::size_t n = 0; n < streams.size(); ++n) streams[n].seed(rng());
  DropoutPlan plan{p_drop, streams};
  return forward(model, masked, &plan);
}

// `count` completions of one masked patch; completion i uses streams[i] only.
template <typename T>
Tensor4<T> inpaint_samples(const InpainterModel<T>& model, const Tensor4<T>& masked, double p_drop,
                           std::span<Stream> streams) {
  detail::check_inpaint_input(model, masked);
  check_drop_probability(p_drop);
  if (masked.shape().n != 1) throw UsageError("inpaint_samples expects a single masked patch");
  const std::size_t count = streams.size();
  if (count == 0) throw UsageError("at least one completion stream is required");
  Tensor4<T> batch(count, 2, masked.shape().h, masked.shape().w);
  for (std::size_t n = 0; n < count; ++n)
    std::copy(masked.item(0).begin(), masked.item(0).end(), batch.item(n).begin());
  DropoutPlan plan{p_drop, streams};
  return forward(model, batch, &plan);
}

}  // namespace picard
