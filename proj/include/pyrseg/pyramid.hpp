#pragma once

#include <vector>

#include "pyrseg/deformable.hpp"

namespace pyrseg {

// Branch layout of a Pyramid View Fusion block. Branches are concatenated in
// this order: the global-pool branch first (if enabled), then one stride-1
// average pool per kernel in increasing size.
struct PyramidSpec {
  std::vector<int> pool_kernels{3, 5, 9};
  bool include_global = true;
  int bottleneck_channels = 4;

  int branches() const {
    return static_cast<int>(pool_kernels.size()) + (include_global ? 1 : 0);
  }
  void validate() const;
};

// Bottleneck width for an input of `channels`: a 4x squeeze rounded up to a
// multiple of the branch count so the grouped fusion conv divides evenly.
int default_bottleneck_channels(int channels, int branches);

struct PvfBlock {
  PyramidSpec spec;
  ConvLayer bottleneck;      // 1x1, in -> bottleneck_channels
  ConvLayer fusion_grouped;  // groups = branches, branches*b -> b
  ConvLayer fusion_full;     // b -> out
  Tensor norm_gain;          // [1, out, 1, 1]
  Tensor norm_offset;

  static PvfBlock create(int in_channels, int out_channels, PyramidSpec spec, Rng& rng,
                         int fusion_kernel = 3);
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
};

// Branch maps of a PVF block for input x, in concatenation order. Exposed for
// inspection; pvf_forward uses the same path.
std::vector<Tensor> pvf_branches(const Tensor& bottlenecked, const PyramidSpec& spec);

// bottleneck -> parallel {global pool + upsample, avg pools} -> concat ->
// grouped conv -> relu -> full conv -> layer norm. Preserves H and W.
Tensor pvf_forward(const Tensor& x, const PvfBlock& block);

// Deformable Pyramid Reception: plain 3x3 plus two deformable dilated
// branches over concat(enc, dec), concatenated and merged.
struct DprBlock {
  ConvLayer plain;        // 3x3, dilation 1
  DeformableBlock def3;   // dilation 3
  DeformableBlock def6;   // dilation 6
  std::vector<ConvLayer> merge;
  // When false both deformable branches run as their plain dilated convs.
  bool deformable = true;

  static DprBlock create(int in_channels, int out_channels, Rng& rng, int merge_kernel = 1,
                         OffsetActivation activation = OffsetActivation::hard_tanh);
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
};

Tensor dpr_forward(const Tensor& enc, const Tensor& dec, const DprBlock& block);

}  // namespace pyrseg
