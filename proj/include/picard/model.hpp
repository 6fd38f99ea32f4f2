#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "picard/error.hpp"
#include "picard/ops.hpp"
#include "picard/random.hpp"
#include "picard/tensor.hpp"

namespace picard {

// One network stage: [nearest 2x upsample] -> conv -> activation -> [channel dropout].
struct StageSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  bool upsample = false;
  Activation activation = Activation::kLeakyRelu;
  bool dropout_eligible = false;

  ConvGeometry geometry() const { return {in_channels, out_channels, kernel, stride, padding}; }
  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct Architecture {
  std::size_t input_size = 64;  // d_p
  std::size_t mask_size = 32;   // d_m
  std::vector<StageSpec> stages;

  std::size_t in_channels() const { return stages.empty() ? 0 : stages.front().in_channels; }
  std::size_t out_channels() const { return stages.empty() ? 0 : stages.back().out_channels; }

  // Stages before the first upsampling stage.
  std::size_t encoder_depth() const {
    std::size_t k = 0;
    while (k < stages.size() && !stages[k].upsample) ++k;
    return k;
  }

  // Spatial extent after running stages [0, count) on an input of `extent`.
  std::size_t extent_after(std::size_t extent, std::size_t count) const {
    for (std::size_t i = 0; i < count; ++i) {
      if (stages[i].upsample) extent *= 2;
      extent = stages[i].geometry().out_extent(extent);
    }
    return extent;
  }

  void validate() const {
    if (stages.empty()) throw ConfigError("architecture has no stages");
    if (mask_size == 0 || mask_size >= input_size)
      throw ConfigError("mask size must satisfy 1 <= d_m < d_p");
    if ((input_size - mask_size) % 2 != 0) throw ConfigError("d_p - d_m must be even");
    if (stages.front().dropout_eligible || stages.back().dropout_eligible)
      throw ConfigError("first and last convolutions cannot be dropout-eligible");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& s = stages[i];
      if (s.in_channels == 0 || s.out_channels == 0 || s.kernel == 0 || s.stride == 0)
        throw ConfigError("stage " + std::to_string(i) + " has a zero-sized dimension");
      if (i > 0 && stages[i - 1].out_channels != s.in_channels)
        throw ConfigError("stage " + std::to_string(i) + " input channels do not chain");
    }
    if (extent_after(input_size, stages.size()) != input_size)
      throw ConfigError("architecture does not preserve spatial size " + std::to_string(input_size));
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Encoder of stride-2 convolutions followed by a mirrored upsample+conv decoder.
// Input is the masked patch plus a binary hole channel; output is one channel in [-1, 1].
inline Architecture default_architecture(std::size_t d_p = 64, std::size_t d_m = 32,
                                         std::vector<std::size_t> widths = {16, 32, 64, 64}) {
  Architecture arch;
  arch.input_size = d_p;
  arch.mask_size = d_m;
  std::size_t in = 2;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    arch.stages.push_back({in, widths[i], 3, 2, 1, false, Activation::kLeakyRelu, i != 0});
    in = widths[i];
  }
  const std::size_t depth = widths.size();
  for (std::size_t i = 0; i < depth; ++i) {
    const bool last = i + 1 == depth;
    const std::size_t out = last ? 1 : widths[depth - 2 - i];
    // The last two decoder stages stay deterministic.
    arch.stages.push_back({in, out, 3, 1, 1, true, last ? Activation::kTanh : Activation::kLeakyRelu,
                           i + 2 < depth});
    in = out;
  }
  arch.validate();
  return arch;
}

template <typename T>
struct Parameters {
  std::vector<Tensor4<T>> weights;
  std::vector<std::vector<T>> biases;

  std::size_t count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
    return n;
  }

  // Visits every parameter tensor in declaration order (weights then bias, per stage).
  template <typename F>
  void for_each(F&& f) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      f(std::span<T>(weights[i].storage()));
      f(std::span<T>(biases[i]));
    }
  }
  template <typename F>
  void for_each(F&& f) const {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      f(std::span<const T>(weights[i].storage()));
      f(std::span<const T>(biases[i]));
    }
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](std::span<const T> s) {
      for (T v : s) ok = ok && std::isfinite(v);
    });
    return ok;
  }

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

template <typename T>
Parameters<T> zero_parameters(const Architecture& arch) {
  Parameters<T> p;
  for (const auto& s : arch.stages) {
    p.weights.emplace_back(s.out_channels, s.in_channels, s.kernel, s.kernel);
    p.biases.emplace_back(s.out_channels, T(0));
  }
  return p;
}

template <typename T>
struct InpainterModel {
  Architecture arch;
  Parameters<T> params;

  template <typename U>
  InpainterModel<U> cast() const {
    InpainterModel<U> m{arch, zero_parameters<U>(arch)};
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
      m.params.weights[i] = params.weights[i].template cast<U>();
      for (std::size_t j = 0; j < params.biases[i].size(); ++j)
        m.params.biases[i][j] = static_cast<U>(params.biases[i][j]);
    }
    return m;
  }
};

// He-uniform weights, zero biases.
template <typename T>
InpainterModel<T> init_model(const Architecture& arch, Stream& rng) {
  arch.validate();
  InpainterModel<T> m{arch, zero_parameters<T>(arch)};
  for (std::size_t i = 0; i < arch.stages.size(); ++i) {
    const auto& s = arch.stages[i];
    const double fan_in = static_cast<double>(s.in_channels * s.kernel * s.kernel);
    const double gain = s.activation == Activation::kLeakyRelu
                            ? std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope))
                            : 1.0;
    const double bound = gain * std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& w : m.params.weights[i].storage()) w = static_cast<T>(u(rng));
  }
  return m;
}

// Per-item dropout streams for one forward pass. Item n of the batch draws its
// channel masks from streams[n], in stage order.
struct DropoutPlan {
  double p_drop = 0.0;
  std::span<Stream> streams;
};

template <typename T>
struct ForwardTrace {
  Tensor4<T> input;
  std::vector<Tensor4<T>> conv_inputs;         // after optional upsample
  std::vector<Tensor4<T>> activated;           // after activation, before dropout
  std::vector<std::vector<T>> channel_scales;  // n*c per stage, empty when no dropout
  Tensor4<T> output;

  bool valid() const { return !conv_inputs.empty(); }
};

namespace detail {

template <typename T>
Tensor4<T> run_stages(const InpainterModel<T>& model, const Tensor4<T>& input, std::size_t count,
                      const DropoutPlan* plan, ForwardTrace<T>* trace) {
  const auto& arch = model.arch;
  if (input.shape().c != arch.in_channels())
    throw ConfigError("input has " + std::to_string(input.shape().c) + " channels, model expects " +
                      std::to_string(arch.in_channels()));
  const bool dropping = plan != nullptr && plan->p_drop > 0.0;
  if (plan != nullptr) check_drop_probability(plan->p_drop);
  if (dropping && plan->streams.size() != input.shape().n)
    throw UsageError("dropout plan needs one stream per batch item");

  Tensor4<T> x = input;
  if (trace != nullptr) {
    *trace = ForwardTrace<T>{};
    trace->input = input;
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto& s = arch.stages[i];
    if (s.upsample) x = upsample_nearest2x(x);
    Tensor4<T> y = conv2d_forward(x, model.params.weights[i], std::span<const T>(model.params.biases[i]),
                                  s.stride, s.padding);
    activate_inplace(y, s.activation);
    std::vector<T> scales;
    if (dropping && s.dropout_eligible) {
      const auto& ys = y.shape();
      scales.resize(ys.n * ys.c);
      for (std::size_t n = 0; n < ys.n; ++n)
        draw_channel_scales(ys.c, plan->p_drop, plan->streams[n], scales.data() + n * ys.c);
    }
    if (trace != nullptr) {
      trace->conv_inputs.push_back(std::move(x));
      trace->activated.push_back(y);
    }
    if (!scales.empty()) {
      const auto& ys = y.shape();
      for (std::size_t n = 0; n < ys.n; ++n)
        for (std::size_t c = 0; c < ys.c; ++c)
          if (scales[n * ys.c + c] != T(1))
            for (auto& v : y.plane(n, c)) v *= scales[n * ys.c + c];
    }
    if (trace != nullptr) trace->channel_scales.push_back(std::move(scales));
    x = std::move(y);
  }
  if (trace != nullptr) trace->output = x;
  return x;
}

}  // namespace detail

// Full forward pass. A null plan (or p_drop == 0) runs the deterministic network.
template <typename T>
Tensor4<T> forward(const InpainterModel<T>& model, const Tensor4<T>& input,
                   const DropoutPlan* plan = nullptr, ForwardTrace<T>* trace = nullptr) {
  return detail::run_stages(model, input, model.arch.stages.size(), plan, trace);
}

// Deepest encoder activation, without dropout.
template <typename T>
Tensor4<T> encoder_features(const InpainterModel<T>& model, const Tensor4<T>& input) {
  return detail::run_stages(model, input, model.arch.encoder_depth(), nullptr,
                            static_cast<ForwardTrace<T>*>(nullptr));
}

// Gradients of every parameter given dLoss/dOutput for the traced forward pass.
template <typename T>
Parameters<T> backward(const InpainterModel<T>& model, const ForwardTrace<T>& trace,
                       const Tensor4<T>& loss_grad) {
  if (!trace.valid()) throw UsageError("backward called without a traced forward pass");
  if (trace.conv_inputs.size() != model.arch.stages.size())
    throw UsageError("trace does not belong to a full forward pass of this model");
  if (loss_grad.shape() != trace.output.shape())
    throw ConfigError("loss gradient shape " + loss_grad.shape().str() + " does not match output " +
                      trace.output.shape().str());

  Parameters<T> grads = zero_parameters<T>(model.arch);
  Tensor4<T> g = loss_grad;
  for (std::size_t i = model.arch.stages.size(); i-- > 0;) {
    const auto& s = model.arch.stages[i];
    const auto& scales = trace.channel_scales[i];
    if (!scales.empty()) {
      const auto& gs = g.shape();
      for (std::size_t n = 0; n < gs.n; ++n)
        for (std::size_t c = 0; c < gs.c; ++c)
          for (auto& v : g.plane(n, c)) v *= scales[n * gs.c + c];
    }
    activation_backward_inplace(g, trace.activated[i], s.activation);
    auto cg = conv2d_backward(trace.conv_inputs[i], model.params.weights[i], g, s.stride, s.padding,
                              /*need_input_grad=*/i > 0);
    grads.weights[i] = std::move(cg.weights);
    grads.biases[i] = std::move(cg.bias);
    if (i > 0) g = s.upsample ? upsample_nearest2x_backward(cg.input) : std::move(cg.input);
  }
  return grads;
}

}  // namespace picard
