#include "pyrseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pyrseg/deformable.hpp"
#include "pyrseg/loss.hpp"
#include "pyrseg/ops.hpp"
#include "pyrseg/rng.hpp"

namespace pyrseg {

double gradient_error(const GradFunction& f, const std::vector<Tensor>& inputs,
                      std::uint64_t seed, double step) {
  auto& tape = Tape::current();
  std::vector<Tensor> args = inputs;
  for (auto& t : args) {
    if (t.requires_grad()) t.clear_grad();
  }
  Tensor out = f(args);
  const Tensor projection = Tensor::uniform(out.shape(), seed, -1.f, 1.f);
  Tensor loss = sum(mul(out, projection));
  tape.backward(loss);
  tape.clear();
  out = Tensor();
  loss = Tensor();

  auto project = [&] {
    NoGradGuard guard;
    const Tensor o = f(args);
    double s = 0.0;
    auto od = o.data();
    auto pd = projection.data();
    for (std::size_t i = 0; i < od.size(); ++i) s += static_cast<double>(od[i]) * pd[i];
    return s;
  };

  double worst = 0.0;
  for (auto& t : args) {
    if (!t.requires_grad()) continue;
    const std::vector<float> analytic(t.grad().begin(), t.grad().end());
    double diff = 0.0, na = 0.0, nn = 0.0;
    auto data = t.mutable_data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const float orig = data[k];
      const float up = orig + static_cast<float>(step);
      const float down = orig - static_cast<float>(step);
      data[k] = up;
      const double lp = project();
      data[k] = down;
      const double lm = project();
      data[k] = orig;
      const double numeric = (lp - lm) / (static_cast<double>(up) - static_cast<double>(down));
      const double a = analytic[k];
      diff += (a - numeric) * (a - numeric);
      na += a * a;
      nn += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-6});
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

namespace {

constexpr double kLossStepScale = 4.0;

struct Case {
  std::string op;
  GradFunction f;
  std::vector<Tensor> inputs;
  // Multiplies the suite step. Smooth scalar losses use a wider step so the
  // float32 rounding of the loss value does not dominate the difference.
  double step_scale = 1.0;
};

Tensor leaf(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

Tensor normal(Shape s, Rng& rng, float stddev = 1.f) {
  return leaf(Tensor::randn(s, rng.next_u64(), stddev));
}

// Magnitudes in [lo, hi] with random signs.
Tensor signed_band(Shape s, Rng& rng, float lo, float hi) {
  std::vector<float> v(s.numel());
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi)) * (rng.uniform() < 0.5 ? -1.f : 1.f);
  return leaf(Tensor(s, std::move(v)));
}

// Pairwise distinct values on a 0.05 grid, so no window max changes under the
// finite-difference step.
Tensor distinct(Shape s, Rng& rng) {
  std::vector<float> v(s.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.05f * static_cast<float>(i);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  return leaf(Tensor(s, std::move(v)));
}

// Deformable offsets whose fractional part stays within [0.2, 0.8], away from
// the bilinear cell boundaries.
Tensor safe_offsets(Shape s, Rng& rng) {
  std::vector<float> v(s.numel());
  for (auto& x : v) {
    x = static_cast<float>(static_cast<int>(rng.below(5)) - 2) +
        static_cast<float>(rng.uniform(0.2, 0.8));
  }
  return leaf(Tensor(s, std::move(v)));
}

Tensor binary_target(Shape s, Rng& rng) {
  std::vector<float> v(s.numel());
  for (auto& x : v) x = rng.uniform() < 0.4 ? 1.f : 0.f;
  return Tensor(s, std::move(v));
}

Tensor one_hot_target(int n, int classes, int h, int w, Rng& rng) {
  std::vector<float> labels(static_cast<std::size_t>(n) * h * w);
  for (auto& x : labels) x = static_cast<float>(rng.below(static_cast<std::uint64_t>(classes)));
  return one_hot(Tensor({n, 1, h, w}, std::move(labels)), classes);
}

void add_conv_cases(std::vector<Case>& cases, Rng& rng) {
  struct Variant {
    std::string op;
    ConvSpec spec;
  };
  const std::vector<Variant> variants{
      {"conv2d", ConvSpec::same(2, 3, 3)},
      {"conv2d_dilated", ConvSpec::same(2, 2, 3, 3)},
      {"conv2d_dilated6", ConvSpec::same(2, 2, 3, 6)},
      {"conv2d_grouped", ConvSpec::same(4, 6, 3, 1, 2)},
      {"conv2d_pointwise", ConvSpec::same(3, 2, 1)},
      {"conv2d_strided", ConvSpec{2, 2, 3, 2, 1, 1, 1}},
  };
  for (const auto& v : variants) {
    const ConvSpec spec = v.spec;
    cases.push_back({v.op,
                     [spec](const std::vector<Tensor>& in) {
                       return conv2d(in[0], in[1], in[2], spec);
                     },
                     {normal({2, spec.in_channels, 4, 4}, rng),
                      normal({spec.out_channels, spec.in_channels / spec.groups, spec.kernel,
                              spec.kernel},
                             rng, 0.5f),
                      normal({1, spec.out_channels, 1, 1}, rng)}});
  }
}

void add_deformable_cases(std::vector<Case>& cases, Rng& rng) {
  for (int dilation : {1, 3}) {
    const ConvSpec spec = ConvSpec::same(2, 2, 3, dilation);
    cases.push_back({"deform_conv2d",
                     [spec](const std::vector<Tensor>& in) {
                       return deform_conv2d(in[0], in[1], in[2], in[3], spec);
                     },
                     {normal({1, 2, 4, 4}, rng), safe_offsets({1, 18, 4, 4}, rng),
                      normal({2, 2, 3, 3}, rng, 0.5f), normal({1, 2, 1, 1}, rng)}});
  }
  // Through the offset predictor: offsets stay near 0.5, clear of the
  // integer cell boundaries and of the clamp.
  for (auto act : {OffsetActivation::hard_tanh, OffsetActivation::tanh}) {
    for (int dilation : {3, 6}) {
      cases.push_back({"deformable_block",
                       [act, dilation](const std::vector<Tensor>& in) {
                         DeformableBlock b;
                         b.activation = act;
                         b.offset_conv = {ConvSpec::same(2, 18, 3), in[1], in[2]};
                         b.main_conv = {ConvSpec::same(2, 2, 3, dilation), in[3], in[4]};
                         return deformable_forward(in[0], b);
                       },
                       {signed_band({1, 2, 4, 4}, rng, 0.2f, 1.f),
                        normal({18, 2, 3, 3}, rng, 0.02f),
                        leaf(Tensor::full({1, 18, 1, 1}, 0.5f)), normal({2, 2, 3, 3}, rng, 0.5f),
                        normal({1, 2, 1, 1}, rng)}});
    }
  }
}

std::vector<Case> build_cases(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Case> cases;
  const Shape s{2, 2, 3, 3};

  cases.push_back({"add", [](const auto& in) { return add(in[0], in[1]); },
                   {normal(s, rng), normal(s, rng)}});
  cases.push_back({"sub", [](const auto& in) { return sub(in[0], in[1]); },
                   {normal(s, rng), normal(s, rng)}});
  cases.push_back({"mul", [](const auto& in) { return mul(in[0], in[1]); },
                   {normal(s, rng), normal(s, rng)}});
  cases.push_back({"scale", [](const auto& in) { return scale(in[0], -1.7f); }, {normal(s, rng)}});
  cases.push_back({"concat_channels",
                   [](const auto& in) { return concat_channels({in[0], in[1], in[0]}); },
                   {normal(s, rng), normal({2, 1, 3, 3}, rng)}});
  cases.push_back({"slice_channels", [](const auto& in) { return slice_channels(in[0], 1, 2); },
                   {normal({2, 4, 3, 3}, rng)}});
  cases.push_back({"sum", [](const auto& in) { return sum(in[0]); }, {normal(s, rng)}});
  cases.push_back({"mean", [](const auto& in) { return mean(in[0]); }, {normal(s, rng)}});
  cases.push_back({"weighted_sum",
                   [](const auto& in) {
                     return weighted_sum({sum(in[0]), mean(in[1]), sum(in[1])}, {1.f, 0.5f, 0.25f});
                   },
                   {normal(s, rng), normal(s, rng)}});

  add_conv_cases(cases, rng);
  add_deformable_cases(cases, rng);

  for (int k : {3, 5, 7}) {
    cases.push_back({"avg_pool_stride1", [k](const auto& in) { return avg_pool_stride1(in[0], k); },
                     {normal({1, 2, 4, 4}, rng)}});
  }
  cases.push_back({"global_avg_pool", [](const auto& in) { return global_avg_pool(in[0]); },
                   {normal({2, 2, 4, 4}, rng)}});
  cases.push_back({"max_pool2", [](const auto& in) { return max_pool2(in[0]); },
                   {distinct({2, 2, 4, 4}, rng)}});
  cases.push_back({"upsample_bilinear",
                   [](const auto& in) { return upsample_to(in[0], 4, 4, UpsampleMode::bilinear); },
                   {normal({1, 2, 2, 2}, rng)}});
  cases.push_back({"upsample_bilinear",
                   [](const auto& in) { return upsample_to(in[0], 3, 4, UpsampleMode::bilinear); },
                   {normal({1, 2, 4, 3}, rng)}});
  cases.push_back({"upsample_nearest",
                   [](const auto& in) { return upsample_to(in[0], 4, 4, UpsampleMode::nearest); },
                   {normal({1, 2, 2, 2}, rng)}});
  cases.push_back({"upsample_nearest",
                   [](const auto& in) { return upsample_to(in[0], 4, 4, UpsampleMode::nearest); },
                   {normal({1, 1, 1, 1}, rng)}});
  cases.push_back({"layer_norm",
                   [](const auto& in) { return layer_norm(in[0], in[1], in[2]); },
                   {normal({2, 3, 4, 4}, rng), normal({1, 3, 1, 1}, rng), normal({1, 3, 1, 1}, rng)}});

  cases.push_back({"relu", [](const auto& in) { return relu(in[0]); },
                   {signed_band(s, rng, 0.1f, 1.f)}});
  {
    Tensor x = signed_band(s, rng, 0.1f, 0.9f);
    auto d = x.mutable_data();
    for (std::size_t i = 0; i < d.size(); i += 3) d[i] *= 2.2f;  // some values past the clamp
    cases.push_back({"hard_tanh", [](const auto& in) { return hard_tanh(in[0]); }, {x}});
  }
  cases.push_back({"tanh", [](const auto& in) { return tanh(in[0]); }, {normal(s, rng)}});
  cases.push_back({"sigmoid", [](const auto& in) { return sigmoid(in[0]); }, {normal(s, rng)}});

  {
    const Tensor t = binary_target({2, 1, 4, 4}, rng);
    cases.push_back({"bce", [t](const auto& in) { return bce(in[0], t); },
                     {normal({2, 1, 4, 4}, rng, 2.f)}, kLossStepScale});
    cases.push_back({"soft_dice_log", [t](const auto& in) { return soft_dice_log(in[0], t, 1.f); },
                     {normal({2, 1, 4, 4}, rng, 2.f)}, kLossStepScale});
    const LossWeights w;
    cases.push_back({"composite_loss", [t, w](const auto& in) { return composite_loss(in[0], t, w); },
                     {normal({2, 1, 4, 4}, rng, 2.f)}, kLossStepScale});
  }
  {
    const Tensor t = one_hot_target(2, 3, 4, 4, rng);
    cases.push_back({"softmax_cross_entropy", [t](const auto& in) { return bce(in[0], t); },
                     {normal({2, 3, 4, 4}, rng, 2.f)}, kLossStepScale});
    cases.push_back({"soft_dice_log", [t](const auto& in) { return soft_dice_log(in[0], t, 1.f); },
                     {normal({2, 3, 4, 4}, rng, 2.f)}, kLossStepScale});
  }
  {
    const MaskPyramid pyramid = build_mask_pyramid(binary_target({1, 1, 8, 8}, rng), MaskMode::binary);
    const LossWeights w;
    cases.push_back({"pyramid_loss",
                     [pyramid, w](const auto& in) {
                       return pyramid_loss({in[0], in[1], in[2], in[3]}, pyramid, w);
                     },
                     {normal({1, 1, 8, 8}, rng), normal({1, 1, 4, 4}, rng),
                      normal({1, 1, 2, 2}, rng), normal({1, 1, 1, 1}, rng)},
                     kLossStepScale});
  }
  return cases;
}

}  // namespace

std::vector<GradcheckResult> gradcheck_suite(std::uint64_t seed, const GradcheckOptions& options) {
  std::vector<GradcheckResult> results;
  std::map<std::string, std::size_t> index;
  constexpr int kRounds = 3;
  for (int round = 0; round < kRounds; ++round) {
    const std::uint64_t round_seed = derive_seed(seed, static_cast<std::uint64_t>(round));
    const auto cases = build_cases(round_seed);
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto& c = cases[i];
      const double err = gradient_error(c.f, c.inputs, derive_seed(round_seed, 1000 + i),
                                        options.step * c.step_scale);
      auto [it, fresh] = index.try_emplace(c.op, results.size());
      if (fresh) results.push_back({c.op, 0.0, 0, true});
      auto& r = results[it->second];
      r.worst_error = std::isfinite(err) ? std::max(r.worst_error, err) : HUGE_VAL;
      ++r.cases;
      r.passed = r.worst_error < options.tolerance;
    }
  }
  return results;
}

}  // namespace pyrseg
