#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pyrseg/error.hpp"
#include "pyrseg/pyramid.hpp"

using namespace pyrseg;

namespace {

struct TapeReset {
  ~TapeReset() { Tape::current().clear(); }
};

PvfBlock make_pvf(int in, int out, PyramidSpec spec, std::uint64_t seed, int fusion_kernel = 3) {
  Rng rng(seed);
  spec.bottleneck_channels = default_bottleneck_channels(in, spec.branches());
  return PvfBlock::create(in, out, spec, rng, fusion_kernel);
}

void randomize(Tensor& t, std::uint64_t seed, float stddev) {
  const Tensor r = Tensor::randn(t.shape(), seed, stddev);
  std::copy(r.data().begin(), r.data().end(), t.mutable_data().begin());
}

}  // namespace

TEST(PyramidSpec, BottleneckWidthIsMultipleOfBranches) {
  EXPECT_EQ(default_bottleneck_channels(64, 4), 16);
  EXPECT_EQ(default_bottleneck_channels(24, 4), 8);
  EXPECT_EQ(default_bottleneck_channels(3, 4), 4);
  EXPECT_EQ(default_bottleneck_channels(16, 3), 6);
  PyramidSpec bad;
  bad.pool_kernels = {5, 3};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.pool_kernels = {4};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Pvf, PreservesSpatialShape) {
  const PvfBlock b = make_pvf(8, 12, {}, 1);
  EXPECT_EQ(pvf_forward(Tensor::randn({1, 8, 32, 32}, 2), b).shape(), (Shape{1, 12, 32, 32}));
  for (int size : {9, 10, 13}) {
    EXPECT_EQ(pvf_forward(Tensor::randn({2, 8, size, size + 1}, 3), b).shape(),
              (Shape{2, 12, size, size + 1}));
  }
}

TEST(Pvf, RejectsInputsSmallerThanTheLargestPool) {
  const PvfBlock b = make_pvf(4, 4, {}, 1);
  EXPECT_THROW(pvf_forward(Tensor::ones({1, 4, 4, 4}), b), ContractError);
}

TEST(Pvf, ConstantInputKeepsBranchesEqualToBottleneck) {
  const PvfBlock b = make_pvf(4, 6, {}, 4, 1);
  const Tensor x = Tensor::full({1, 4, 12, 12}, 0.7f);
  const Tensor bott = conv2d(x, b.bottleneck);
  const auto branches = pvf_branches(bott, b.spec);
  ASSERT_EQ(branches.size(), 4u);
  for (const auto& br : branches) EXPECT_LT(oracle::max_abs_diff(br, bott), 1e-6);
  // With pointwise fusion convs the whole block stays spatially constant.
  const Tensor y = pvf_forward(x, b);
  for (int c = 0; c < 6; ++c)
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j) EXPECT_NEAR(y.at(0, c, i, j), y.at(0, c, 0, 0), 1e-5);
}

TEST(Pvf, BranchesMatchOracleComposition) {
  const PvfBlock b = make_pvf(6, 6, {}, 5);
  const Tensor x = Tensor::randn({2, 6, 11, 10}, 6);
  const Tensor bott = conv2d(x, b.bottleneck);
  const auto branches = pvf_branches(bott, b.spec);
  ASSERT_EQ(branches.size(), 4u);
  // Global branch: per-channel mean broadcast over the map.
  const Shape s = bott.shape();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double m = 0;
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) m += bott.at(n, c, i, j);
      m /= static_cast<double>(s.plane());
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) EXPECT_NEAR(branches[0].at(n, c, i, j), m, 1e-5);
    }
  const int kernels[] = {3, 5, 9};
  for (int i = 0; i < 3; ++i) {
    EXPECT_LT(oracle::max_abs_diff(branches[i + 1], oracle::avg_pool_stride1(bott, kernels[i])), 1e-5);
  }
}

TEST(Pvf, ForwardMatchesPrimitiveComposition) {
  PvfBlock b = make_pvf(8, 5, {}, 7);
  randomize(b.norm_gain, 8, 1.f);
  randomize(b.norm_offset, 9, 1.f);
  const Tensor x = Tensor::randn({1, 8, 10, 10}, 10);
  const Tensor bott = oracle::conv2d(x, b.bottleneck.weight, b.bottleneck.bias, 1, 1, 1, 0);
  std::vector<Tensor> parts{upsample_to(global_avg_pool(bott), 10, 10, UpsampleMode::nearest)};
  for (int k : {3, 5, 9}) parts.push_back(oracle::avg_pool_stride1(bott, k));
  const Tensor cat = concat_channels(parts);
  const auto& g = b.fusion_grouped;
  Tensor red = oracle::conv2d(cat, g.weight, g.bias, 1, 1, 4, 1);
  std::vector<float> rv(red.data().begin(), red.data().end());
  for (auto& v : rv) v = std::max(v, 0.f);
  red = Tensor(red.shape(), rv);
  const auto& f = b.fusion_full;
  const Tensor mixed = oracle::conv2d(red, f.weight, f.bias, 1, 1, 1, 1);
  const Tensor ref = oracle::layer_norm(mixed, b.norm_gain, b.norm_offset, kLayerNormEps);
  EXPECT_LT(oracle::max_abs_diff(pvf_forward(x, b), ref), 1e-4);
}

TEST(Pvf, SinglePoolWithoutGlobalDegenerates) {
  PyramidSpec spec;
  spec.pool_kernels = {5};
  spec.include_global = false;
  const PvfBlock b = make_pvf(4, 4, spec, 11);
  EXPECT_EQ(b.spec.branches(), 1);
  const Tensor x = Tensor::randn({1, 4, 9, 9}, 12);
  const Tensor pooled = avg_pool_stride1(conv2d(x, b.bottleneck), 5);
  const Tensor ref = layer_norm(conv2d(relu(conv2d(pooled, b.fusion_grouped)), b.fusion_full),
                                b.norm_gain, b.norm_offset);
  EXPECT_LT(oracle::max_abs_diff(pvf_forward(x, b), ref), 1e-6);
}

TEST(Dpr, ZeroOffsetsEqualPlainDilatedBranches) {
  Rng rng(13);
  DprBlock b = DprBlock::create(6, 4, rng);
  const Tensor enc = Tensor::randn({1, 3, 12, 12}, 14);
  const Tensor dec = Tensor::randn({1, 3, 12, 12}, 15);
  const Tensor y = dpr_forward(enc, dec, b);
  b.deformable = false;
  EXPECT_LT(oracle::max_abs_diff(y, dpr_forward(enc, dec, b)), 1e-5);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 12, 12}));
}

TEST(Dpr, MatchesBranchByBranchComposition) {
  Rng rng(16);
  DprBlock b = DprBlock::create(4, 3, rng);
  for (auto* d : {&b.def3, &b.def6}) {
    randomize(d->offset_conv.weight, 17, 0.5f);
    randomize(d->offset_conv.bias, 18, 0.5f);
  }
  const Tensor enc = Tensor::randn({1, 2, 10, 9}, 19);
  const Tensor dec = Tensor::randn({1, 2, 10, 9}, 20);
  const Tensor x = concat_channels(enc, dec);
  auto relu_d = [](const Tensor& t) {
    std::vector<float> v(t.data().begin(), t.data().end());
    for (auto& e : v) e = std::max(e, 0.f);
    return Tensor(t.shape(), v);
  };
  auto wide = [&](const DeformableBlock& d) {
    const Tensor raw = oracle::conv2d(x, d.offset_conv.weight, d.offset_conv.bias, 1, 1, 1, 1);
    std::vector<float> off(raw.data().begin(), raw.data().end());
    for (auto& v : off) v = std::clamp(v, -1.f, 1.f);
    const int dil = d.main_conv.spec.dilation;
    return relu_d(oracle::deform_conv2d(x, Tensor(raw.shape(), off), d.main_conv.weight,
                                        d.main_conv.bias, dil));
  };
  Tensor y = concat_channels(
      {relu_d(oracle::conv2d(x, b.plain.weight, b.plain.bias, 1, 1, 1, 1)), wide(b.def3), wide(b.def6)});
  for (const auto& m : b.merge) y = relu_d(oracle::conv2d(y, m.weight, m.bias, 1, 1, 1, m.spec.padding));
  EXPECT_LT(oracle::max_abs_diff(dpr_forward(enc, dec, b), y), 1e-4);
}

TEST(Dpr, GradientSupportFitsFifteenByFifteenWindow) {
  TapeReset reset;
  Rng rng(21);
  DprBlock b = DprBlock::create(4, 4, rng);
  for (auto* d : {&b.def3, &b.def6}) {
    randomize(d->offset_conv.weight, 22, 1.f);
    randomize(d->offset_conv.bias, 23, 1.f);
  }
  const int size = 23;
  for (int probe = 0; probe < 4; ++probe) {
    Tensor enc = Tensor::randn({1, 2, size, size}, rng.next_u64(), 1.f, true);
    Tensor dec = Tensor::randn({1, 2, size, size}, rng.next_u64(), 1.f, true);
    const Tensor y = dpr_forward(enc, dec, b);
    // Probe a pixel whose output is active so the gradient is not killed by
    // the final relu.
    int oi = 0, oj = 0;
    do {
      oi = static_cast<int>(rng.below(size));
      oj = static_cast<int>(rng.below(size));
    } while (y.at(0, 0, oi, oj) + y.at(0, 1, oi, oj) + y.at(0, 2, oi, oj) + y.at(0, 3, oi, oj) <= 0.f);
    std::vector<float> sel(y.numel(), 0.f);
    for (int c = 0; c < 4; ++c) sel[(c * size + oi) * size + oj] = 1.f;
    backward(sum(mul(y, Tensor(y.shape(), sel))));
    int reach = -1;
    for (const Tensor* t : {&enc, &dec}) {
      if (!t->has_grad()) continue;
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < size; ++i)
          for (int j = 0; j < size; ++j)
            if (t->grad()[(c * size + i) * size + j] != 0.f) {
              reach = std::max(reach, std::max(std::abs(i - oi), std::abs(j - oj)));
            }
    }
    EXPECT_GE(reach, 0);
    EXPECT_LE(reach, 7);
    Tape::current().clear();
    enc.clear_grad();
    dec.clear_grad();
  }
}

TEST(Dpr, RejectsMismatchedMaps) {
  Rng rng(24);
  const DprBlock b = DprBlock::create(4, 4, rng);
  EXPECT_THROW(dpr_forward(Tensor::ones({1, 2, 8, 8}), Tensor::ones({1, 2, 8, 9}), b), ShapeError);
  EXPECT_THROW(dpr_forward(Tensor::ones({1, 2, 8, 8}), Tensor::ones({1, 3, 8, 8}), b), ShapeError);
}

TEST(Dpr, ParameterCountMatchesLayerSum) {
  Rng rng(25);
  const DprBlock b = DprBlock::create(8, 4, rng);
  const std::size_t expected = (8 * 9 * 4 + 4) + 2 * (8 * 9 * 18 + 18 + 8 * 9 * 4 + 4) +
                               (12 * 4 + 4) + (4 * 4 + 4);
  EXPECT_EQ(b.parameter_count(), expected);
}
