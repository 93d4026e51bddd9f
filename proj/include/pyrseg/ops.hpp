#pragma once

#include <string>

#include "pyrseg/rng.hpp"
#include "pyrseg/tensor.hpp"

namespace pyrseg {

// Hyperparameters shared by regular, dilated, grouped and pointwise
// convolutions. Padding is zero padding, applied symmetrically.
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int groups = 1;
  int padding = 0;

  // Stride-1 convolution whose padding dilation*(kernel-1)/2 preserves H and W.
  static ConvSpec same(int in, int out, int kernel, int dilation = 1, int groups = 1);

  // Throws ShapeError/ContractError when an invariant is violated.
  void validate() const;
  int out_extent(int in_extent) const;
  int fan_in() const { return in_channels / groups * kernel * kernel; }
};

struct ConvLayer {
  ConvSpec spec;
  Tensor weight;  // [out, in/groups, k, k]
  Tensor bias;    // [1, out, 1, 1]

  // Kaiming-normal weights (std = sqrt(2 / fan_in)) and zero bias, or all
  // zeros when zero_init is set.
  static ConvLayer create(const ConvSpec& spec, Rng& rng, bool zero_init = false);
  std::size_t parameter_count() const { return weight.numel() + bias.numel(); }
};

// y(p0) = sum over taps p_i of x(p0 + dilation * p_i) w(p_i) + bias,
// per group, with zero padding.
Tensor conv2d(const Tensor& x, const ConvLayer& layer);
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const ConvSpec& spec);

// Same-size window mean with stride 1. The divisor is the number of in-bounds
// pixels of each window, so constant inputs stay exactly constant.
Tensor avg_pool_stride1(const Tensor& x, int kernel);

Tensor global_avg_pool(const Tensor& x);

enum class UpsampleMode { nearest, bilinear };
UpsampleMode parse_upsample_mode(const std::string& name);

// Resizes to [H, W]. Bilinear uses half-pixel centers (source coordinate
// (dst + 0.5) * in / out - 0.5, clamped at 0).
Tensor upsample_to(const Tensor& x, int height, int width,
                   UpsampleMode mode = UpsampleMode::bilinear);

// 2x2 window max with stride 2. Ties route the gradient to the first maximum
// in row-major window order.
Tensor max_pool2(const Tensor& x);

inline constexpr float kLayerNormEps = 1e-5f;

// Normalizes each sample over (C, H, W) then applies per-channel gain and
// offset ([1, C, 1, 1] each).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset,
                  float eps = kLayerNormEps);

Tensor relu(const Tensor& x);
Tensor hard_tanh(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

}  // namespace pyrseg
