#pragma once

#include <Eigen/Core>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "picard/error.hpp"
#include "picard/random.hpp"
#include "picard/tensor.hpp"

namespace picard {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t in_channels = 0, out_channels = 0, kernel = 3, stride = 1, padding = 1;

  std::size_t out_extent(std::size_t in) const {
    if (in + 2 * padding < kernel) throw ConfigError("convolution kernel larger than padded input");
    return (in + 2 * padding - kernel) / stride + 1;
  }
  std::size_t patch_length() const noexcept { return in_channels * kernel * kernel; }
};

namespace detail {

// Unfolds one batch item into a (C*K*K) x (Ho*Wo) row-major matrix.
template <typename T>
void im2col(const T* in, std::size_t h, std::size_t w, const ConvGeometry& g, std::size_t ho,
            std::size_t wo, T* col) {
  const auto k = g.kernel;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* plane = in + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = col + ((c * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.padding);
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0)
                                                                        : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters (accumulates) columns back into one batch item.
template <typename T>
void col2im(const T* col, std::size_t h, std::size_t w, const ConvGeometry& g, std::size_t ho,
            std::size_t wo, T* in) {
  const auto k = g.kernel;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = in + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = col + ((c * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          const T* src = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[static_cast<std::size_t>(ix)] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
ConvGeometry check_conv(const Tensor4<T>& input, const Tensor4<T>& weights, std::span<const T> bias,
                        std::size_t stride, std::size_t padding) {
  const auto& ws = weights.shape();
  if (ws.h != ws.w) throw ConfigError("convolution kernel must be square, got " + ws.str());
  if (input.shape().c != ws.c)
    throw ConfigError("input has " + std::to_string(input.shape().c) +
                      " channels but weights expect " + std::to_string(ws.c));
  if (bias.size() != ws.n) throw ConfigError("bias length does not match output channels");
  if (stride == 0) throw ConfigError("stride must be >= 1");
  return ConvGeometry{ws.c, ws.n, ws.h, stride, padding};
}

}  // namespace detail

// Cross-correlation with zero padding. weights are (out, in, k, k).
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const Tensor4<T>& weights, std::span<const T> bias,
                          std::size_t stride, std::size_t padding) {
  const auto g = detail::check_conv(input, weights, bias, stride, padding);
  const auto& is = input.shape();
  const auto ho = g.out_extent(is.h), wo = g.out_extent(is.w);
  Tensor4<T> out(is.n, g.out_channels, ho, wo);
  AlignedVector<T> col(g.patch_length() * ho * wo);
  Eigen::Map<const RowMatrix<T>> wm(weights.data(), static_cast<Eigen::Index>(g.out_channels),
                                    static_cast<Eigen::Index>(g.patch_length()));
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(bias.data(),
                                                           static_cast<Eigen::Index>(bias.size()));
  for (std::size_t n = 0; n < is.n; ++n) {
    detail::im2col(input.item(n).data(), is.h, is.w, g, ho, wo, col.data());
    Eigen::Map<const RowMatrix<T>> cm(col.data(), static_cast<Eigen::Index>(g.patch_length()),
                                      static_cast<Eigen::Index>(ho * wo));
    Eigen::Map<RowMatrix<T>> om(out.item(n).data(), static_cast<Eigen::Index>(g.out_channels),
                                static_cast<Eigen::Index>(ho * wo));
    om.noalias() = wm * cm;
    om.colwise() += bv;
  }
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor4<T> input;
  Tensor4<T> weights;
  std::vector<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const Tensor4<T>& weights,
                             const Tensor4<T>& out_grad, std::size_t stride, std::size_t padding,
                             bool need_input_grad = true) {
  std::vector<T> zero_bias(weights.shape().n, T(0));
  const auto g = detail::check_conv(input, weights, std::span<const T>(zero_bias), stride, padding);
  const auto& is = input.shape();
  const auto ho = g.out_extent(is.h), wo = g.out_extent(is.w);
  if (out_grad.shape() != Shape4{is.n, g.out_channels, ho, wo})
    throw ConfigError("output gradient shape " + out_grad.shape().str() + " does not match forward");

  ConvGrads<T> grads{need_input_grad ? Tensor4<T>(is) : Tensor4<T>(), Tensor4<T>(weights.shape()),
                     std::vector<T>(g.out_channels, T(0))};
  const auto rows = static_cast<Eigen::Index>(g.patch_length());
  const auto cols = static_cast<Eigen::Index>(ho * wo);
  const auto outs = static_cast<Eigen::Index>(g.out_channels);
  AlignedVector<T> col(g.patch_length() * ho * wo);
  AlignedVector<T> dcol(need_input_grad ? col.size() : 0);
  Eigen::Map<const RowMatrix<T>> wm(weights.data(), outs, rows);
  Eigen::Map<RowMatrix<T>> dwm(grads.weights.data(), outs, rows);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dbv(grads.bias.data(), outs);
  for (std::size_t n = 0; n < is.n; ++n) {
    detail::im2col(input.item(n).data(), is.h, is.w, g, ho, wo, col.data());
    Eigen::Map<const RowMatrix<T>> cm(col.data(), rows, cols);
    Eigen::Map<const RowMatrix<T>> gm(out_grad.item(n).data(), outs, cols);
    dwm.noalias() += gm * cm.transpose();
    for (Eigen::Index o = 0; o < outs; ++o) {
      T acc = T(0);
      for (Eigen::Index j = 0; j < cols; ++j) acc += gm(o, j);
      dbv(o) += acc;
    }
    if (need_input_grad) {
      Eigen::Map<RowMatrix<T>> dcm(dcol.data(), rows, cols);
      dcm.noalias() = wm.transpose() * gm;
      detail::col2im(dcol.data(), is.h, is.w, g, ho, wo, grads.input.item(n).data());
    }
  }
  return grads;
}

template <typename T>
Tensor4<T> upsample_nearest2x(const Tensor4<T>& in) {
  const auto& s = in.shape();
  Tensor4<T> out(s.n, s.c, s.h * 2, s.w * 2);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = in.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t y = 0; y < 2 * s.h; ++y)
        for (std::size_t x = 0; x < 2 * s.w; ++x) dst[y * 2 * s.w + x] = src[(y / 2) * s.w + x / 2];
    }
  return out;
}

template <typename T>
Tensor4<T> upsample_nearest2x_backward(const Tensor4<T>& out_grad) {
  const auto& s = out_grad.shape();
  Tensor4<T> in(s.n, s.c, s.h / 2, s.w / 2);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = out_grad.plane(n, c);
      auto dst = in.plane(n, c);
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) dst[(y / 2) * (s.w / 2) + x / 2] += src[y * s.w + x];
    }
  return in;
}

enum class Activation : std::uint8_t { kIdentity = 0, kLeakyRelu = 1, kTanh = 2 };

inline constexpr double kLeakySlope = 0.2;

template <typename T>
void activate_inplace(Tensor4<T>& t, Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return;
    case Activation::kLeakyRelu:
      for (auto& v : t.storage()) v = v > T(0) ? v : static_cast<T>(kLeakySlope) * v;
      return;
    case Activation::kTanh:
      for (auto& v : t.storage()) v = std::tanh(v);
      return;
  }
}

// Gradient through an activation, given the activation's output.
template <typename T>
void activation_backward_inplace(Tensor4<T>& grad, const Tensor4<T>& activated, Activation a) {
  auto& g = grad.storage();
  const auto& y = activated.storage();
  switch (a) {
    case Activation::kIdentity:
      return;
    case Activation::kLeakyRelu:
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(y[i] > T(0))) g[i] *= static_cast<T>(kLeakySlope);
      return;
    case Activation::kTanh:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= T(1) - y[i] * y[i];
      return;
  }
}

inline void check_drop_probability(double p_drop) {
  if (!(p_drop >= 0.0 && p_drop < 1.0))
    throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p_drop));
}

// Draws the keep/scale factor for each channel of one batch item.
template <typename T>
void draw_channel_scales(std::size_t channels, double p_drop, Stream& rng, T* scales) {
  const T keep = static_cast<T>(1.0 / (1.0 - p_drop));
  std::bernoulli_distribution drop(p_drop);
  for (std::size_t c = 0; c < channels; ++c) scales[c] = drop(rng) ? T(0) : keep;
}

// Spatial dropout: zeroes whole (batch, channel) planes with probability p_drop
// and rescales survivors by 1/(1 - p_drop).
template <typename T>
Tensor4<T> channel_dropout(const Tensor4<T>& activations, double p_drop, Stream& rng) {
  check_drop_probability(p_drop);
  Tensor4<T> out = activations;
  if (p_drop == 0.0) return out;
  const auto& s = activations.shape();
  std::vector<T> scales(s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    draw_channel_scales(s.c, p_drop, rng, scales.data());
    for (std::size_t c = 0; c < s.c; ++c)
      for (auto& v : out.plane(n, c)) v *= scales[c];
  }
  return out;
}

}  // namespace picard
