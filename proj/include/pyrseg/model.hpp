#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pyrseg/pyramid.hpp"

namespace pyrseg {

enum class StageOrder { dpr_then_pvf, pvf_then_dpr };

struct ModelConfig {
  int in_channels = 3;
  int num_classes = 1;  // 1 = binary with sigmoid, >1 = softmax over classes
  std::vector<int> encoder_widths{16, 32, 64, 128};
  int bottleneck_width = 256;
  int input_size = 96;

  bool use_pvf = true;
  bool use_dpr = true;
  bool use_pl = true;

  std::vector<int> pvf_kernels{3, 5, 9};
  bool pvf_global = true;
  int pvf_fusion_kernel = 3;
  int dpr_merge_kernel = 1;
  bool dpr_deformable = true;
  OffsetActivation offset_activation = OffsetActivation::hard_tanh;
  StageOrder stage_order = StageOrder::dpr_then_pvf;

  // Throws ConfigError.
  void validate() const;
};

inline constexpr int kPyramidLevels = 4;  // scales 1, 1/2, 1/4, 1/8

// Prediction heads indexed by level: 0 -> full resolution, 1 -> 1/2,
// 2 -> 1/4, 3 -> 1/8. Auxiliary levels are undefined when the pyramid loss
// is disabled.
using PyramidLogits = std::array<Tensor, kPyramidLevels>;

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

// Encoder-decoder with four [conv3x3+relu]x2 encoder stages and four decoder
// stages of upsample -> DPR (or double conv) -> PVF, plus 1x1 heads.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  PyramidLogits forward(const Tensor& image) const;

  // Deterministic, name-sorted-by-construction parameter list.
  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;
  // Parameters of the three auxiliary 1x1 heads (0 when use_pl is off).
  std::size_t auxiliary_head_parameter_count() const;

  void zero_grad();
  Model clone() const;
  // Copies parameter values from a model of identical architecture.
  void copy_parameters_from(const Model& other);

  // Manifest (config + named parameter list) plus one tensor dump per
  // parameter, all inside `dir`.
  void save(const std::string& dir) const;
  static Model load(const std::string& dir);

 private:
  struct EncoderStage {
    ConvLayer first, second;
  };
  struct DecoderStage {
    std::optional<DprBlock> dpr;
    std::optional<ConvLayer> plain_first, plain_second;
    std::optional<PvfBlock> pvf;
    std::optional<ConvLayer> head;
  };

  ModelConfig config_;
  std::vector<EncoderStage> encoder_;
  ConvLayer bottleneck_first_, bottleneck_second_;
  std::vector<DecoderStage> decoder_;
};

// Label mask [N,1,H,W] from full-resolution logits. Binary: foreground iff
// logit > 0 (so sigmoid exactly 0.5 is background). Multiclass: argmax with
// the lowest class index winning ties.
Tensor logits_to_mask(const Tensor& logits);
Tensor predict_mask(const Tensor& image, const Model& model);

}  // namespace pyrseg
