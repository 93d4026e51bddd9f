#include "pyrseg/pyramid.hpp"

#include <algorithm>

#include "pyrseg/error.hpp"

namespace pyrseg {

void PyramidSpec::validate() const {
  for (std::size_t i = 0; i < pool_kernels.size(); ++i) {
    if (pool_kernels[i] < 1 || pool_kernels[i] % 2 == 0) {
      throw ConfigError("pyramid pool kernels must be odd");
    }
    if (i > 0 && pool_kernels[i] <= pool_kernels[i - 1]) {
      throw ConfigError("pyramid pool kernels must be strictly increasing");
    }
  }
  if (branches() < 1) throw ConfigError("pyramid needs at least one branch");
  if (bottleneck_channels < 1) throw ConfigError("bottleneck channels must be positive");
}

int default_bottleneck_channels(int channels, int branches) {
  const int squeezed = std::max(1, channels / 4);
  return (squeezed + branches - 1) / branches * branches;
}

PvfBlock PvfBlock::create(int in_channels, int out_channels, PyramidSpec spec, Rng& rng,
                          int fusion_kernel) {
  spec.validate();
  PvfBlock block;
  const int b = spec.bottleneck_channels;
  const int g = spec.branches();
  block.spec = std::move(spec);
  block.bottleneck = ConvLayer::create(ConvSpec::same(in_channels, b, 1), rng);
  block.fusion_grouped = ConvLayer::create(ConvSpec::same(g * b, b, fusion_kernel, 1, g), rng);
  block.fusion_full = ConvLayer::create(ConvSpec::same(b, out_channels, fusion_kernel), rng);
  block.norm_gain = Tensor::ones({1, out_channels, 1, 1}, true);
  block.norm_offset = Tensor::zeros({1, out_channels, 1, 1}, true);
  return block;
}

std::vector<Tensor> PvfBlock::parameters() const {
  return {bottleneck.weight,  bottleneck.bias,  fusion_grouped.weight, fusion_grouped.bias,
          fusion_full.weight, fusion_full.bias, norm_gain,             norm_offset};
}

std::size_t PvfBlock::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.numel();
  return total;
}

std::vector<Tensor> pvf_branches(const Tensor& bottlenecked, const PyramidSpec& spec) {
  const Shape s = bottlenecked.shape();
  std::vector<Tensor> branches;
  if (spec.include_global) {
    branches.push_back(
        upsample_to(global_avg_pool(bottlenecked), s.h, s.w, UpsampleMode::nearest));
  }
  for (int k : spec.pool_kernels) branches.push_back(avg_pool_stride1(bottlenecked, k));
  return branches;
}

Tensor pvf_forward(const Tensor& x, const PvfBlock& block) {
  const Shape s = x.shape();
  if (!block.spec.pool_kernels.empty()) {
    const int k = block.spec.pool_kernels.back();
    if (2 * std::min(s.h, s.w) - 1 < k) {
      throw ContractError("pvf_forward: input " + s.str() + " too small for pool kernel " +
                          std::to_string(k));
    }
  }
  Tensor b = conv2d(x, block.bottleneck);
  Tensor fused = concat_channels(pvf_branches(b, block.spec));
  Tensor reduced = relu(conv2d(fused, block.fusion_grouped));
  Tensor mixed = conv2d(reduced, block.fusion_full);
  return layer_norm(mixed, block.norm_gain, block.norm_offset);
}

DprBlock DprBlock::create(int in_channels, int out_channels, Rng& rng, int merge_kernel,
                          OffsetActivation activation) {
  DprBlock block;
  block.plain = ConvLayer::create(ConvSpec::same(in_channels, out_channels, 3), rng);
  block.def3 = DeformableBlock::create(in_channels, out_channels, 3, rng, activation);
  block.def6 = DeformableBlock::create(in_channels, out_channels, 6, rng, activation);
  block.merge.push_back(
      ConvLayer::create(ConvSpec::same(3 * out_channels, out_channels, merge_kernel), rng));
  block.merge.push_back(
      ConvLayer::create(ConvSpec::same(out_channels, out_channels, merge_kernel), rng));
  return block;
}

std::vector<Tensor> DprBlock::parameters() const {
  std::vector<Tensor> params{plain.weight,
                             plain.bias,
                             def3.offset_conv.weight,
                             def3.offset_conv.bias,
                             def3.main_conv.weight,
                             def3.main_conv.bias,
                             def6.offset_conv.weight,
                             def6.offset_conv.bias,
                             def6.main_conv.weight,
                             def6.main_conv.bias};
  for (const auto& m : merge) {
    params.push_back(m.weight);
    params.push_back(m.bias);
  }
  return params;
}

std::size_t DprBlock::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.numel();
  return total;
}

Tensor dpr_forward(const Tensor& enc, const Tensor& dec, const DprBlock& block) {
  const Shape a = enc.shape(), b = dec.shape();
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ShapeError("dpr_forward: encoder " + a.str() + " and decoder " + b.str() +
                     " maps must share N, H, W");
  }
  Tensor x = concat_channels(enc, dec);
  Tensor plain = relu(conv2d(x, block.plain));
  Tensor wide3 = block.deformable ? deformable_forward(x, block.def3)
                                  : conv2d(x, block.def3.main_conv);
  Tensor wide6 = block.deformable ? deformable_forward(x, block.def6)
                                  : conv2d(x, block.def6.main_conv);
  Tensor y = concat_channels({plain, relu(wide3), relu(wide6)});
  for (const auto& layer : block.merge) y = relu(conv2d(y, layer));
  return y;
}

}  // namespace pyrseg
