#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "pyrseg/error.hpp"
#include "pyrseg/loss.hpp"
#include "pyrseg/model.hpp"

using namespace pyrseg;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.encoder_widths = {4, 8, 8, 16};
  c.bottleneck_width = 16;
  c.input_size = 32;
  c.pvf_kernels = {3};
  return c;
}

ModelConfig micro_config() {
  ModelConfig c;
  c.num_classes = 2;
  c.encoder_widths = {4, 4, 8, 8};
  c.bottleneck_width = 8;
  c.input_size = 16;
  c.pvf_kernels = {3};
  return c;
}

std::size_t count_for(ModelConfig c, bool pvf, bool dpr, bool pl) {
  c.use_pvf = pvf;
  c.use_dpr = dpr;
  c.use_pl = pl;
  return Model(c, 1).parameter_count();
}

}  // namespace

TEST(ModelConfig, ValidationRejectsBadConfigs) {
  ModelConfig c = small_config();
  c.input_size = 40;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.encoder_widths = {4, 8, 8};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.pvf_kernels = {3, 9};  // coarsest decoder stage is 4x4
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.dpr_merge_kernel = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(small_config().validate());
}

TEST(Model, HeadsCoverFourScalesAtDefaultSize) {
  ModelConfig c;  // 96x96 default widths
  const Model m(c, 3);
  const auto heads = m.forward(Tensor::uniform({1, 3, 96, 96}, 4, 0.f, 1.f));
  const int sizes[] = {96, 48, 24, 12};
  for (int l = 0; l < kPyramidLevels; ++l) {
    ASSERT_TRUE(heads[l].defined());
    EXPECT_EQ(heads[l].shape(), (Shape{1, 1, sizes[l], sizes[l]}));
  }
}

TEST(Model, AblationSwitchboardKeepsShapes) {
  const Tensor x = Tensor::uniform({2, 3, 32, 32}, 5, 0.f, 1.f);
  for (int mask = 0; mask < 8; ++mask) {
    ModelConfig c = small_config();
    c.use_pvf = mask & 1;
    c.use_dpr = mask & 2;
    c.use_pl = mask & 4;
    const auto heads = Model(c, 6).forward(x);
    EXPECT_EQ(heads[0].shape(), (Shape{2, 1, 32, 32}));
    for (int l = 1; l < kPyramidLevels; ++l) {
      EXPECT_EQ(heads[l].defined(), c.use_pl);
      if (c.use_pl) EXPECT_EQ(heads[l].shape(), (Shape{2, 1, 32 >> l, 32 >> l}));
    }
  }
  ModelConfig swapped = small_config();
  swapped.stage_order = StageOrder::pvf_then_dpr;
  EXPECT_EQ(Model(swapped, 6).forward(x)[0].shape(), (Shape{2, 1, 32, 32}));
}

TEST(Model, ParameterCountOrdering) {
  const ModelConfig c = small_config();
  const std::size_t base = count_for(c, false, false, false);
  const std::size_t pvf = count_for(c, true, false, false);
  const std::size_t both = count_for(c, true, true, false);
  const std::size_t all = count_for(c, true, true, true);
  EXPECT_LT(base, pvf);
  EXPECT_LT(pvf, both);
  ModelConfig pl = c;
  const Model with_pl(pl, 1);
  EXPECT_EQ(all - both, with_pl.auxiliary_head_parameter_count());
  // Three 1x1 heads at decoder widths 16, 8 and 8 for one class.
  EXPECT_EQ(with_pl.auxiliary_head_parameter_count(), (16 + 1) + (8 + 1) + (8 + 1));
}

TEST(Model, ForwardIsDeterministicGivenSeed) {
  const Tensor x = Tensor::uniform({1, 3, 32, 32}, 7, 0.f, 1.f);
  const auto a = Model(small_config(), 8).forward(x);
  const auto b = Model(small_config(), 8).forward(x);
  for (int l = 0; l < kPyramidLevels; ++l) EXPECT_EQ(oracle::max_abs_diff(a[l], b[l]), 0.0);
  const auto c = Model(small_config(), 9).forward(x);
  EXPECT_GT(oracle::max_abs_diff(a[0], c[0]), 0.0);
}

TEST(Model, ZeroOffsetsMatchDilatedOnlyVariant) {
  ModelConfig c = small_config();
  const Tensor x = Tensor::uniform({1, 3, 32, 32}, 10, 0.f, 1.f);
  const auto deform = Model(c, 11).forward(x);
  c.dpr_deformable = false;
  const auto plain = Model(c, 11).forward(x);
  for (int l = 0; l < kPyramidLevels; ++l) EXPECT_LT(oracle::max_abs_diff(deform[l], plain[l]), 1e-5);
}

TEST(Model, RejectsWrongInput) {
  const Model m(small_config(), 1);
  EXPECT_THROW(m.forward(Tensor::ones({1, 3, 16, 16})), ShapeError);
  EXPECT_THROW(m.forward(Tensor::ones({1, 1, 32, 32})), ShapeError);
}

TEST(Model, ParameterNamesAreUniqueAndStable) {
  const auto params = Model(small_config(), 1).parameters();
  std::set<std::string> names;
  for (const auto& p : params) names.insert(p.name);
  EXPECT_EQ(names.size(), params.size());
  EXPECT_EQ(params.front().name, "enc0.conv1.weight");
  EXPECT_TRUE(names.count("dec0.dpr.def3.offset.weight"));
  EXPECT_TRUE(names.count("dec3.pvf.norm.gain"));
  EXPECT_EQ(params.back().name, "dec3.head.bias");
}

TEST(Model, CheckpointRoundTrip) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pyrseg_model_ckpt";
  fs::remove_all(dir);
  ModelConfig c = small_config();
  c.offset_activation = OffsetActivation::tanh;
  c.stage_order = StageOrder::pvf_then_dpr;
  const Model m(c, 12);
  m.save(dir.string());
  const Model back = Model::load(dir.string());
  EXPECT_EQ(back.config().offset_activation, OffsetActivation::tanh);
  EXPECT_EQ(back.config().stage_order, StageOrder::pvf_then_dpr);
  EXPECT_EQ(back.config().encoder_widths, c.encoder_widths);
  const auto pa = m.parameters(), pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(oracle::max_abs_diff(pa[i].tensor, pb[i].tensor), 0.0);
  EXPECT_THROW(Model::load((dir / "missing").string()), IoError);
  fs::remove_all(dir);
}

TEST(Model, CloneIsIndependent) {
  Model m(small_config(), 13);
  const Model copy = m.clone();
  m.parameters()[0].tensor.mutable_data()[0] += 1.f;
  EXPECT_NE(m.parameters()[0].tensor.data()[0], copy.parameters()[0].tensor.data()[0]);
}

TEST(Masks, BinaryTieIsBackground) {
  const Tensor m = logits_to_mask(Tensor::zeros({1, 1, 3, 3}));
  for (float v : m.data()) EXPECT_EQ(v, 0.f);
  const Tensor p = logits_to_mask(Tensor::full({1, 1, 3, 3}, 1e-6f));
  for (float v : p.data()) EXPECT_EQ(v, 1.f);
}

TEST(Masks, MulticlassArgmax) {
  std::vector<float> favour(2 * 9);
  for (int i = 0; i < 9; ++i) favour[9 + i] = 2.f;
  const Tensor ones = logits_to_mask(Tensor({1, 2, 3, 3}, favour));
  for (float v : ones.data()) EXPECT_EQ(v, 1.f);
  const Tensor tie = logits_to_mask(Tensor::zeros({1, 3, 2, 2}));
  for (float v : tie.data()) EXPECT_EQ(v, 0.f);

  const Tensor z = Tensor::randn({2, 4, 5, 5}, 14);
  const Tensor mask = logits_to_mask(z);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        int best = 0;
        for (int c = 1; c < 4; ++c)
          if (z.at(n, c, i, j) > z.at(n, best, i, j)) best = c;
        EXPECT_EQ(mask.at(n, 0, i, j), static_cast<float>(best));
      }
}

TEST(Model, EndToEndGradientMatchesFiniteDifferencesOnSampledParameters) {
  const Model m(micro_config(), 15);
  // Zero offsets put every bilinear sample on a grid line, where the sampler
  // has a kink; shift them to half-pixel positions first.
  std::uint64_t offset_seed = 100;
  for (auto& p : m.parameters()) {
    if (p.name.find(".offset.") == std::string::npos) continue;
    const bool bias = p.name.ends_with("bias");
    const Tensor r = bias ? Tensor::full(p.tensor.shape(), 0.5f) : Tensor::randn(p.tensor.shape(), offset_seed++, 0.02f);
    std::copy(r.data().begin(), r.data().end(), p.tensor.mutable_data().begin());
  }
  const Tensor image = Tensor::uniform({2, 3, 16, 16}, 16, 0.f, 1.f);
  std::vector<float> labels(2 * 256);
  for (int i = 0; i < 2 * 256; ++i) labels[i] = ((i % 16) > 5 && (i / 16 % 16) > 4) ? 1.f : 0.f;
  const MaskPyramid target = build_mask_pyramid(Tensor({2, 1, 16, 16}, labels), MaskMode::multiclass);
  const LossWeights w;
  auto loss_value = [&] {
    NoGradGuard guard;
    return static_cast<double>(pyramid_loss(m.forward(image), target, w).item());
  };

  auto params = m.parameters();
  Tape::current().clear();
  backward(pyramid_loss(m.forward(image), target, w));
  Tape::current().clear();

  std::size_t total = 0;
  for (const auto& p : params) total += p.tensor.numel();
  Rng rng(17);
  const std::size_t samples = std::max<std::size_t>(1, total / 100);
  const double h = 2e-3;
  double diff = 0, na = 0, nn = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t k = rng.below(total);
    std::size_t pi = 0;
    while (k >= params[pi].tensor.numel()) k -= params[pi++].tensor.numel();
    Tensor t = params[pi].tensor;
    const double analytic = t.has_grad() ? t.grad()[k] : 0.0;
    const float orig = t.data()[k];
    t.mutable_data()[k] = orig + static_cast<float>(h);
    const double up = loss_value();
    t.mutable_data()[k] = orig - static_cast<float>(h);
    const double down = loss_value();
    t.mutable_data()[k] = orig;
    const double numeric = (up - down) / (2 * h);
    diff += (analytic - numeric) * (analytic - numeric);
    na += analytic * analytic;
    nn += numeric * numeric;
  }
  EXPECT_LT(std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-6}), 2e-2)
      << samples << " sampled parameters";
}
