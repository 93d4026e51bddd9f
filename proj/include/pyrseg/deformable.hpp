#pragma once

#include "pyrseg/ops.hpp"

namespace pyrseg {

enum class OffsetActivation { hard_tanh, tanh };
OffsetActivation parse_offset_activation(const std::string& name);
std::string to_string(OffsetActivation a);

// Per-pixel, per-tap displacements in absolute pixels, [N, 2k^2, H, W].
// Channel 2t holds dy and 2t+1 holds dx for tap t, taps in row-major order
// over the k x k window.
struct OffsetField {
  Tensor values;
  int kernel = 3;
};

// Offset predictor plus a dilated main convolution sampled at displaced taps.
struct DeformableBlock {
  ConvLayer offset_conv;  // k=3, dilation 1, out = 2 * main kernel^2
  ConvLayer main_conv;    // k=3, dilation alpha, same padding
  OffsetActivation activation = OffsetActivation::hard_tanh;

  // The offset conv starts at zero so the block begins as a plain dilated conv.
  static DeformableBlock create(int in_channels, int out_channels, int dilation, Rng& rng,
                                OffsetActivation activation = OffsetActivation::hard_tanh);
  std::size_t parameter_count() const {
    return offset_conv.parameter_count() + main_conv.parameter_count();
  }
};

OffsetField compute_offsets(const Tensor& x, const DeformableBlock& block);

// For every output pixel p0 and tap i, bilinearly samples x at
// p0 + dilation * RF[i] + offset[i, p0] (zero outside the image), weights it
// by w(i) and sums over taps and input channels. Differentiable w.r.t. x,
// weight, bias and the offsets.
Tensor deform_conv2d(const Tensor& x, const Tensor& offsets, const Tensor& weight,
                     const Tensor& bias, const ConvSpec& spec);
Tensor deform_conv2d(const Tensor& x, const OffsetField& offsets,
                     const DeformableBlock& block);

// compute_offsets followed by deform_conv2d.
Tensor deformable_forward(const Tensor& x, const DeformableBlock& block);

// Largest Chebyshev distance a tap can read from:
// dilation * (k - 1) / 2 plus the unit offset range.
int receptive_footprint(const DeformableBlock& block);

}  // namespace pyrseg
