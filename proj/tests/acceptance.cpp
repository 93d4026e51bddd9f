// Acceptance checks. `acceptance core` runs criteria 1-7, 9 and 10;
// `acceptance ablation` runs criterion 8. Each criterion prints one
// `criterion N: PASS|FAIL ...` line and the exit code is nonzero on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pyrseg/cli.hpp"
#include "pyrseg/deformable.hpp"
#include "pyrseg/gradcheck.hpp"
#include "pyrseg/pyramid.hpp"
#include "pyrseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace pyrseg;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTolerance = 1e-3;
constexpr double kGradBudgetSeconds = 60.0;
constexpr int kGradSeeds = 3;
constexpr double kConvTolerance = 1e-5;
constexpr int kConvCases = 50;
constexpr double kDeformTolerance = 1e-5;
constexpr int kOffsetProbes = 10'000;
constexpr int kSupportPixels = 20;
constexpr int kSupportRadius = 7;
constexpr double kLossTolerance = 1e-6;
constexpr int kRecipeEpochs = 30;
constexpr double kMicroIouTarget = 90.0;
constexpr double kMicroBudgetSeconds = 600.0;
constexpr int kMicroSamples = 64;
constexpr double kAblationMargin = 1.0;
constexpr double kAblationBudgetSeconds = 7200.0;
constexpr int kAblationSeeds = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Report {
  int failures = 0;
  void line(int id, bool ok, const std::string& title, const std::string& detail) {
    std::printf("criterion %d: %s %s (%s)\n", id, ok ? "PASS" : "FAIL", title.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pyrseg_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 1 ---------------------------------------------------------------------------

void gradient_integrity(Report& r) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_op;
  std::size_t ops = 0;
  bool ok = true;
  for (int s = 1; s <= kGradSeeds; ++s) {
    const auto results = gradcheck_suite(static_cast<std::uint64_t>(s), {1e-2, kGradTolerance});
    ops = results.size();
    for (const auto& res : results) {
      ok = ok && res.passed;
      if (res.worst_error > worst) {
        worst = res.worst_error;
        worst_op = res.op;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  r.line(1, ok && elapsed < kGradBudgetSeconds, "gradient integrity",
         fmt("%zu ops x %d seeds, worst rel err %.2e (%s) < %.0e, %.1fs < %.0fs", ops, kGradSeeds,
             worst, worst_op.c_str(), kGradTolerance, elapsed, kGradBudgetSeconds));
}

// 2 ---------------------------------------------------------------------------

void conv_oracle(Report& r) {
  Rng rng(2024);
  double worst = 0.0;
  const int dilations[] = {1, 3, 6};
  for (int i = 0; i < kConvCases; ++i) {
    const int dilation = dilations[i % 3];
    const int groups = 1 + static_cast<int>(rng.below(2));
    const int cin = groups * (1 + static_cast<int>(rng.below(3)));
    const int cout = groups * (1 + static_cast<int>(rng.below(3)));
    const int kernel = rng.uniform() < 0.8f ? 3 : 1;
    const int stride = rng.uniform() < 0.75f ? 1 : 2;
    const int h = 5 + static_cast<int>(rng.below(8)), w = 5 + static_cast<int>(rng.below(8));
    ConvSpec spec = ConvSpec::same(cin, cout, kernel, dilation);
    spec.groups = groups;
    spec.stride = stride;
    const Tensor x = Tensor::randn({1 + static_cast<int>(rng.below(2)), cin, h, w}, rng.next_u64());
    const Tensor wt = Tensor::randn({cout, cin / groups, kernel, kernel}, rng.next_u64());
    const Tensor b = Tensor::randn({1, cout, 1, 1}, rng.next_u64());
    const Tensor got = conv2d(x, wt, b, spec);
    const Tensor want = oracle::conv2d(x, wt, b, stride, dilation, groups, spec.padding);
    worst = std::max(worst, got.shape() == want.shape() ? oracle::max_abs_diff(got, want) : HUGE_VAL);
  }
  r.line(2, worst < kConvTolerance, "conv2d matches direct summation",
         fmt("%d cases over dilation 1/3/6, max |d| %.2e < %.0e", kConvCases, worst, kConvTolerance));
}

// 3 ---------------------------------------------------------------------------

void deform_reduction(Report& r) {
  double worst = 0.0;
  Rng rng(303);
  for (int i = 0; i < 12; ++i) {
    const int dilation = (i % 3 == 0) ? 1 : (i % 3 == 1 ? 3 : 6);
    const int cin = 1 + static_cast<int>(rng.below(4)), cout = 1 + static_cast<int>(rng.below(4));
    const int h = 4 + static_cast<int>(rng.below(10)), w = 4 + static_cast<int>(rng.below(10));
    const ConvSpec spec = ConvSpec::same(cin, cout, 3, dilation);
    const Tensor x = Tensor::randn({2, cin, h, w}, rng.next_u64());
    const Tensor wt = Tensor::randn({cout, cin, 3, 3}, rng.next_u64());
    const Tensor b = Tensor::randn({1, cout, 1, 1}, rng.next_u64());
    const Tensor y = deform_conv2d(x, Tensor::zeros({2, 18, h, w}), wt, b, spec);
    worst = std::max(worst, oracle::max_abs_diff(y, conv2d(x, wt, b, spec)));
  }
  long long probes = 0, outside = 0;
  while (probes < kOffsetProbes) {
    for (auto act : {OffsetActivation::hard_tanh, OffsetActivation::tanh}) {
      DeformableBlock blk = DeformableBlock::create(2, 2, 3, rng, act);
      blk.offset_conv.weight = Tensor::randn(blk.offset_conv.weight.shape(), rng.next_u64(), 4.f);
      blk.offset_conv.bias = Tensor::randn(blk.offset_conv.bias.shape(), rng.next_u64(), 4.f);
      const OffsetField f = compute_offsets(Tensor::randn({1, 2, 6, 6}, rng.next_u64(), 5.f), blk);
      for (float v : f.values.data()) {
        ++probes;
        if (!(std::abs(v) <= 1.f)) ++outside;
      }
    }
  }
  r.line(3, worst < kDeformTolerance && outside == 0, "deformable reduction and offset range",
         fmt("zero-offset max |d| %.2e < %.0e; %lld offset probes, %lld outside [-1,1]", worst,
             kDeformTolerance, probes, outside));
}

// 4 ---------------------------------------------------------------------------

void receptive_field(Report& r) {
  Rng rng(404);
  DprBlock b = DprBlock::create(6, 4, rng);
  for (auto* d : {&b.def3, &b.def6}) {
    d->offset_conv.weight = Tensor::randn(d->offset_conv.weight.shape(), rng.next_u64(), 1.f);
    d->offset_conv.bias = Tensor::randn(d->offset_conv.bias.shape(), rng.next_u64(), 1.f);
  }
  const int size = 25;
  int worst = -1, probed = 0, empty = 0;
  while (probed < kSupportPixels) {
    Tensor enc = Tensor::randn({1, 3, size, size}, rng.next_u64(), 1.f, true);
    Tensor dec = Tensor::randn({1, 3, size, size}, rng.next_u64(), 1.f, true);
    const Tensor y = dpr_forward(enc, dec, b);
    const int oi = static_cast<int>(rng.below(size)), oj = static_cast<int>(rng.below(size));
    double active = 0;
    for (int c = 0; c < 4; ++c) active += y.at(0, c, oi, oj);
    if (active <= 0) {
      Tape::current().clear();
      continue;  // every output relu is off, so no gradient reaches the input
    }
    std::vector<float> sel(y.numel(), 0.f);
    for (int c = 0; c < 4; ++c) sel[(static_cast<std::size_t>(c) * size + oi) * size + oj] = 1.f;
    backward(sum(mul(y, Tensor(y.shape(), sel))));
    Tape::current().clear();
    int reach = -1;
    for (const Tensor* t : {&enc, &dec}) {
      if (!t->has_grad()) continue;
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < size; ++i)
          for (int j = 0; j < size; ++j)
            if (t->grad()[(static_cast<std::size_t>(c) * size + i) * size + j] != 0.f)
              reach = std::max(reach, std::max(std::abs(i - oi), std::abs(j - oj)));
    }
    if (reach < 0) ++empty;
    worst = std::max(worst, reach);
    ++probed;
  }
  r.line(4, worst <= kSupportRadius && worst >= 0 && empty == 0, "DPR gradient support",
         fmt("%d active output pixels, widest nonzero input gradient at Chebyshev radius %d <= %d",
             probed, worst, kSupportRadius));
}

// 5 ---------------------------------------------------------------------------

void loss_algebra(Report& r) {
  Rng rng(505);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<float> m(2 * 32 * 32);
    for (auto& v : m) v = rng.uniform() < 0.3f ? 1.f : 0.f;
    const MaskPyramid p = build_mask_pyramid(Tensor({2, 1, 32, 32}, m), MaskMode::binary);
    PyramidLogits heads;
    for (int l = 0; l < kPyramidLevels; ++l)
      heads[l] = Tensor::randn({2, 1, 32 >> l, 32 >> l}, rng.next_u64(), 2.f);
    const double weights[] = {1.0, 0.75, 0.5, 0.25};
    double hand = 0.0;
    for (int l = 0; l < kPyramidLevels; ++l)
      hand += weights[l] * (oracle::bce(heads[l], p.levels[l]) +
                            oracle::soft_dice_log(heads[l], p.levels[l], 1.0));
    worst = std::max(worst, std::abs(pyramid_loss(heads, p, {}).item() - hand));
  }
  // Constant maps give the same per-pixel cross-entropy at every scale.
  LossWeights bce_only;
  bce_only.dice_weight = 0.f;
  const MaskPyramid ones = build_mask_pyramid(Tensor::ones({1, 1, 16, 16}), MaskMode::binary);
  PyramidLogits equal;
  for (int l = 0; l < kPyramidLevels; ++l) equal[l] = Tensor::full({1, 1, 16 >> l, 16 >> l}, -0.4f);
  const double l1 = composite_loss(equal[0], ones.levels[0], bce_only).item();
  const double pl = pyramid_loss(equal, ones, bce_only).item();
  const double gap = std::abs(pl - 2.5 * l1);
  r.line(5, worst < kLossTolerance && gap < kLossTolerance, "pyramid loss algebra",
         fmt("hand sum max |d| %.2e < %.0e; equal components %.7f vs 2.5 x %.7f", worst,
             kLossTolerance, pl, l1));
}

// 6 ---------------------------------------------------------------------------

ModelConfig micro_model(int classes) {
  ModelConfig c;
  c.num_classes = classes;
  c.encoder_widths = {32, 64, 64, 128};
  c.bottleneck_width = 128;
  c.input_size = 16;
  c.pvf_kernels = {3};
  return c;
}

Dataset micro_dataset(int count, std::uint64_t seed) {
  Dataset d;
  for (int i = 0; i < count; ++i) {
    const Family f = kFamilies[i % kFamilies.size()];
    d.push_back({generate(SceneSpec::family_default(f, 16), seed + static_cast<std::uint64_t>(i)), f});
  }
  return d;
}

void recipe(Report& r) {
  bool schedule_ok = true;
  for (float lr0 : kLearningRateGrid)
    for (int e = 0; e < kRecipeEpochs; ++e) {
      const float want = static_cast<float>(lr0 * std::pow(0.8, e / 2));
      const float got = learning_rate_at(lr0, e);
      schedule_ok = schedule_ok && std::abs(got - want) <= std::nextafter(want, 1.f) - want;
    }
  const bool decay_point = std::abs(learning_rate_at(1e-3f, 4) - 6.4e-4f) <= 1e-10f;

  const Model m(micro_model(1), 6);
  auto params = m.parameters();
  Rng rng(606);
  for (auto& p : params) {
    auto g = p.tensor.mutable_grad();
    for (auto& v : g) v = rng.normal();
  }
  clip_gradients(params, 0.1f, ClipMode::global_norm);
  const double once = global_grad_norm(params);
  std::vector<float> snapshot;
  for (const auto& p : params) snapshot.insert(snapshot.end(), p.tensor.grad().begin(), p.tensor.grad().end());
  clip_gradients(params, 0.1f, ClipMode::global_norm);
  std::vector<float> again;
  for (const auto& p : params) again.insert(again.end(), p.tensor.grad().begin(), p.tensor.grad().end());
  const bool clip_ok = std::abs(once - 0.1) < 1e-6 && snapshot == again;

  TrainConfig t;
  t.model = micro_model(1);
  t.epochs = kRecipeEpochs;
  const Dataset d = micro_dataset(8, 6000);
  const TrainResult run = train(t, d, d);
  bool monotone = run.log.size() == static_cast<std::size_t>(kRecipeEpochs);
  for (std::size_t e = 0; e < run.log.size(); ++e) {
    monotone = monotone && run.log[e].lr == learning_rate_at(t.lr, static_cast<int>(e));
    if (e > 0) monotone = monotone && run.log[e].lr <= run.log[e - 1].lr;
  }
  r.line(6, schedule_ok && decay_point && clip_ok && monotone, "training recipe",
         fmt("schedule within 1 ulp %s, lr(4) = %.6g; clip norm %.7f and second clip %s; "
             "%zu-epoch run, lr %.3g -> %.3g monotone %s",
             schedule_ok ? "yes" : "no", learning_rate_at(1e-3f, 4), once,
             snapshot == again ? "bit-identical" : "changed", run.log.size(),
             run.log.empty() ? 0.f : run.log.front().lr, run.log.empty() ? 0.f : run.log.back().lr,
             monotone ? "yes" : "no"));
}

// 7 ---------------------------------------------------------------------------

void learning_sanity(Report& r) {
  const auto t0 = Clock::now();
  const Dataset d = micro_dataset(kMicroSamples, 7000);
  double best = 0.0;
  float best_lr = 0.f;
  std::string per_lr;
  for (float lr : kLearningRateGrid) {
    TrainConfig t;
    // Two classes (object and background) use the single-logit sigmoid head.
    t.model = micro_model(1);
    t.lr = lr;
    t.batch_size = 1;
    t.augment = false;
    t.epochs = 30;
    t.seed = 7;
    const TrainResult run = train(t, d, d);
    const double iou = evaluate(run.model, d).iou;
    per_lr += fmt(" %.0e:%.2f", lr, iou);
    if (iou > best) {
      best = iou;
      best_lr = lr;
    }
  }
  const double elapsed = seconds_since(t0);
  r.line(7, best >= kMicroIouTarget && elapsed < kMicroBudgetSeconds, "micro-config learning sanity",
         fmt("16x16, 2 classes (sigmoid head), %d samples, batch 1; train IoU by lr%s; best %.2f at %.0e >= %.0f; %.0fs < %.0fs",
             kMicroSamples, per_lr.c_str(), best, best_lr, kMicroIouTarget, elapsed,
             kMicroBudgetSeconds));
}

// 8 ---------------------------------------------------------------------------

// Desk-scale ablation setup: reduced widths and a shortened schedule for
// three rows and three seeds on one core.
TrainConfig ablation_config() {
  TrainConfig t;
  t.model.encoder_widths = {8, 16, 32, 32};
  t.model.bottleneck_width = 32;
  t.model.input_size = 96;
  t.epochs = 12;
  t.lr = 1e-3f;
  return t;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

void directional_ablation(Report& r) {
  const auto t0 = Clock::now();
  CorpusSpec cs;
  cs.root = scratch("corpus96").string();
  cs.size = 96;
  cs.train = 400;
  cs.val = 40;
  cs.test = 100;
  const Corpus corpus = generate_corpus(cs);
  const Dataset train_set = load_split(corpus, "train");
  const Dataset val = load_split(corpus, "val");
  const Dataset test = load_split(corpus, "test");
  const std::vector<AblationFlags> rows{{false, false, false}, {true, true, false}, {true, true, true}};
  std::vector<std::vector<double>> iou(rows.size());
  for (int s = 1; s <= kAblationSeeds; ++s) {
    TrainConfig t = ablation_config();
    t.seed = static_cast<std::uint64_t>(s);
    const auto result = ablation_grid(t, train_set, val, test, rows);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      iou[i].push_back(result[i].test.iou);
      std::printf("  seed %d row pvf=%d dpr=%d pl=%d test iou %.2f dice %.2f (%.0fs elapsed)\n", s,
                  rows[i].pvf, rows[i].dpr, rows[i].pl, result[i].test.iou, result[i].test.dice,
                  seconds_since(t0));
      std::fflush(stdout);
    }
  }
  fs::remove_all(cs.root);
  const double base = median(iou[0]), mid = median(iou[1]), full = median(iou[2]);
  const double elapsed = seconds_since(t0);
  const bool ok = full - base >= kAblationMargin && full >= mid && elapsed <= kAblationBudgetSeconds;
  r.line(8, ok, "directional ablation",
         fmt("median test IoU over %d seeds: baseline %.2f, +PVF+DPR %.2f, +PVF+DPR+PL %.2f; "
             "full - baseline %.2f >= %.1f, full - (PVF+DPR) %.2f >= 0; %.0fs <= %.0fs",
             kAblationSeeds, base, mid, full, full - base, kAblationMargin, full - mid, elapsed,
             kAblationBudgetSeconds));
}

// 9 ---------------------------------------------------------------------------

void parameter_ordering(Report& r) {
  bool ok = true;
  std::string detail;
  for (const ModelConfig& base : {ModelConfig{}, ablation_config().model}) {
    std::size_t counts[4];
    const AblationFlags flags[] = {{false, false, false}, {true, false, false}, {true, true, false}, {true, true, true}};
    std::size_t aux = 0;
    for (int i = 0; i < 4; ++i) {
      ModelConfig c = base;
      c.use_pvf = flags[i].pvf;
      c.use_dpr = flags[i].dpr;
      c.use_pl = flags[i].pl;
      const Model m(c, 1);
      counts[i] = m.parameter_count();
      if (i == 3) aux = m.auxiliary_head_parameter_count();
    }
    // Three 1x1 heads on the 1/8, 1/4 and 1/2 decoder maps.
    const auto& w = base.encoder_widths;
    const std::size_t expected_aux = static_cast<std::size_t>(w[3] + 1 + w[2] + 1 + w[1] + 1) * base.num_classes;
    ok = ok && counts[0] < counts[1] && counts[1] < counts[2] && counts[3] - counts[2] == aux &&
         aux == expected_aux;
    detail += fmt("%s%zu < %zu < %zu, +PL adds %zu", detail.empty() ? "" : "; ", counts[0], counts[1],
                  counts[2], counts[3] - counts[2]);
  }
  r.line(9, ok, "parameter-count ordering", detail + " (three 1x1 heads)");
}

// 10 --------------------------------------------------------------------------

void determinism(Report& r) {
  const fs::path dir = scratch("determinism");
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  const std::vector<std::string> common{
      "data.size=16", "data.train=16", "data.val=8", "data.test=8", "model.encoder_widths=4,8,8,8",
      "model.bottleneck_width=8", "model.pvf_kernels=3", "train.epochs=2", "train.batch_size=4"};
  auto with = [&](std::vector<std::string> head, const std::string& corpus) {
    head.insert(head.end(), common.begin(), common.end());
    head.push_back("data.root=" + corpus);
    return head;
  };
  bool ok = true;
  for (const char* c : {"c1", "c2"})
    ok = ok && run(with({"gen-corpus", "--seed", "9"}, (dir / c).string())) == 0;
  ok = ok && slurp(dir / "c1" / "corpus.txt") == slurp(dir / "c2" / "corpus.txt");
  for (const char* o : {"t1", "t2"})
    ok = ok && run(with({"train", "--seed", "4", "--out", (dir / o).string()}, (dir / "c1").string())) == 0;
  const std::string m1 = slurp(dir / "t1" / "metrics.csv"), m2 = slurp(dir / "t2" / "metrics.csv");
  for (const char* o : {"a1", "a2"})
    ok = ok && run(with({"ablate", "--seed", "4", "--out", (dir / o).string()}, (dir / "c1").string())) == 0;
  const std::string a1 = slurp(dir / "a1" / "ablation.csv"), a2 = slurp(dir / "a2" / "ablation.csv");
  const bool same = !m1.empty() && m1 == m2 && !a1.empty() && a1 == a2;
  r.line(10, ok && same, "determinism",
         fmt("corpus manifest, metrics.csv (%zu bytes) and ablation.csv (%zu bytes) rerun %s", m1.size(),
             a1.size(), same ? "byte-identical" : "different"));
  fs::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "core";
  Report report;
  try {
    if (mode == "core" || mode == "all") {
      gradient_integrity(report);
      conv_oracle(report);
      deform_reduction(report);
      receptive_field(report);
      loss_algebra(report);
      recipe(report);
      learning_sanity(report);
      parameter_ordering(report);
      determinism(report);
    }
    if (mode == "ablation" || mode == "all") directional_ablation(report);
    if (mode != "core" && mode != "ablation" && mode != "all") {
      std::fprintf(stderr, "usage: acceptance [core|ablation|all]\n");
      return 2;
    }
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  return report.failures == 0 ? 0 : 1;
}
