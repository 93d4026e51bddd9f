#pragma once

#include "pyrseg/model.hpp"

namespace pyrseg {

struct LossWeights {
  // Pyramid weights for the 1/2, 1/4 and 1/8 heads.
  float alpha = 0.75f;
  float beta = 0.5f;
  float gamma = 0.25f;
  float bce_weight = 1.f;
  float dice_weight = 1.f;
  float dice_eps = 1.f;

  void validate() const;
};

enum class MaskMode { binary, multiclass };

// Ground truth at scales 1, 1/2, 1/4, 1/8. Binary masks hold {0,1}; multiclass
// masks hold class indices stored as floats.
struct MaskPyramid {
  std::array<Tensor, kPyramidLevels> levels;
  MaskMode mode = MaskMode::binary;
};

// Binary: repeated max_pool2. Multiclass: nearest-neighbour subsampling that
// keeps the top-left pixel of each 2x2 cell.
MaskPyramid build_mask_pyramid(const Tensor& mask, MaskMode mode);

// [N,1,H,W] class indices -> [N,C,H,W] one-hot.
Tensor one_hot(const Tensor& labels, int num_classes);

// Mean cross-entropy over pixels. One channel: sigmoid BCE computed from
// logits as max(z,0) - z*t + log(1 + exp(-|z|)). Several channels: softmax
// cross-entropy against a one-hot target.
Tensor bce(const Tensor& logits, const Tensor& target);

// -log((2 * sum(p*t) + eps) / (sum(p) + sum(t) + eps)), p = sigmoid or
// channel softmax of the logits; sums run over the whole batch.
Tensor soft_dice_log(const Tensor& logits, const Tensor& target, float eps = 1.f);

Tensor composite_loss(const Tensor& logits, const Tensor& target, const LossWeights& w);

// L1 + alpha L2 + beta L4 + gamma L8 over the defined heads; with only the
// full-resolution head defined this is L1.
Tensor pyramid_loss(const PyramidLogits& heads, const MaskPyramid& pyramid,
                    const LossWeights& w);

}  // namespace pyrseg
