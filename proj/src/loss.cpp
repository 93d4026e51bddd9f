#include "pyrseg/loss.hpp"

#include <cmath>
#include <vector>

#include "pyrseg/error.hpp"

namespace pyrseg {

void LossWeights::validate() const {
  for (float v : {alpha, beta, gamma}) {
    if (!(v >= 0.f && v <= 1.f)) throw ConfigError("pyramid loss weights must lie in [0, 1]");
  }
  if (bce_weight < 0.f || dice_weight < 0.f) throw ConfigError("loss term weights must be >= 0");
  if (!(dice_eps > 0.f)) throw ConfigError("loss.dice_eps must be positive");
}

MaskPyramid build_mask_pyramid(const Tensor& mask, MaskMode mode) {
  const Shape s = mask.shape();
  if (s.c != 1) throw ShapeError("build_mask_pyramid: mask must have one channel");
  if (s.h % 8 != 0 || s.w % 8 != 0) {
    throw ContractError("build_mask_pyramid: extents must be divisible by 8, got " + s.str());
  }
  NoGradGuard guard;
  MaskPyramid pyr;
  pyr.mode = mode;
  pyr.levels[0] = mask;
  for (int l = 1; l < kPyramidLevels; ++l) {
    const Tensor& prev = pyr.levels[l - 1];
    if (mode == MaskMode::binary) {
      pyr.levels[l] = max_pool2(prev);
      continue;
    }
    const Shape ps = prev.shape();
    const Shape ns{ps.n, 1, ps.h / 2, ps.w / 2};
    std::vector<float> out(ns.numel());
    auto d = prev.data();
    for (int n = 0; n < ns.n; ++n) {
      for (int i = 0; i < ns.h; ++i) {
        for (int j = 0; j < ns.w; ++j) {
          out[(static_cast<std::size_t>(n) * ns.h + i) * ns.w + j] =
              d[(static_cast<std::size_t>(n) * ps.h + 2 * i) * ps.w + 2 * j];
        }
      }
    }
    pyr.levels[l] = Tensor(ns, std::move(out));
  }
  return pyr;
}

Tensor one_hot(const Tensor& labels, int num_classes) {
  const Shape s = labels.shape();
  if (s.c != 1) throw ShapeError("one_hot: labels must have one channel");
  const Shape os{s.n, num_classes, s.h, s.w};
  std::vector<float> out(os.numel(), 0.f);
  const std::size_t plane = s.plane();
  auto d = labels.data();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const int c = static_cast<int>(d[n * plane + p]);
      if (c < 0 || c >= num_classes) throw ContractError("one_hot: label out of range");
      out[(static_cast<std::size_t>(n) * num_classes + c) * plane + p] = 1.f;
    }
  }
  return Tensor(os, std::move(out));
}

namespace {

void require_match(const Tensor& logits, const Tensor& target, const char* op) {
  if (logits.shape() != target.shape()) {
    throw ShapeError(std::string(op) + ": logits " + logits.shape().str() + " vs target " +
                     target.shape().str());
  }
}

// Per-element probabilities: sigmoid for one channel, channel softmax otherwise.
std::vector<double> probabilities(const Tensor& logits) {
  const Shape s = logits.shape();
  auto z = logits.data();
  std::vector<double> p(z.size());
  if (s.c == 1) {
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-double(z[i])));
    return p;
  }
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t q = 0; q < plane; ++q) {
      double mx = z[base + q];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, double(z[base + c * plane + q]));
      double total = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double e = std::exp(double(z[base + c * plane + q]) - mx);
        p[base + c * plane + q] = e;
        total += e;
      }
      for (int c = 0; c < s.c; ++c) p[base + c * plane + q] /= total;
    }
  }
  return p;
}

// Converts dL/dp into dL/dz through sigmoid or softmax, accumulating into g.
void chain_through_probabilities(const Shape& s, const std::vector<double>& p,
                                 const std::vector<double>& dp, float upstream,
                                 std::span<float> g) {
  if (s.c == 1) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      g[i] += static_cast<float>(upstream * dp[i] * p[i] * (1.0 - p[i]));
    }
    return;
  }
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t q = 0; q < plane; ++q) {
      double dot = 0.0;
      for (int c = 0; c < s.c; ++c) dot += p[base + c * plane + q] * dp[base + c * plane + q];
      for (int c = 0; c < s.c; ++c) {
        const std::size_t i = base + c * plane + q;
        g[i] += static_cast<float>(upstream * p[i] * (dp[i] - dot));
      }
    }
  }
}

}  // namespace

Tensor bce(const Tensor& logits, const Tensor& target) {
  require_match(logits, target, "bce");
  const Shape s = logits.shape();
  auto z = logits.data();
  auto t = target.data();
  const double pixels = static_cast<double>(s.n) * s.plane();
  double total = 0.0;
  std::vector<double> p;
  if (s.c == 1) {
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double v = z[i];
      total += std::max(v, 0.0) - v * t[i] + std::log1p(std::exp(-std::abs(v)));
    }
  } else {
    p = probabilities(logits);
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (t[i] != 0.f) total -= t[i] * std::log(std::max(p[i], 1e-300));
    }
  }
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&logits});
  Tensor y = Tensor(kScalar, {static_cast<float>(total / pixels)}, grad);
  if (grad) {
    tape.record({logits, target}, y, [logits, target, y, pixels, p = std::move(p)]() mutable {
      const double gy = y.grad()[0];
      auto z = logits.data();
      auto t = target.data();
      auto g = logits.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double prob = p.empty() ? 1.0 / (1.0 + std::exp(-double(z[i]))) : p[i];
        g[i] += static_cast<float>(gy * (prob - t[i]) / pixels);
      }
    });
  }
  return y;
}

Tensor soft_dice_log(const Tensor& logits, const Tensor& target, float eps) {
  require_match(logits, target, "soft_dice_log");
  auto t = target.data();
  std::vector<double> p = probabilities(logits);
  double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * t[i];
    sum_p += p[i];
    sum_t += t[i];
  }
  const double num = 2.0 * inter + eps;
  const double den = sum_p + sum_t + eps;
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&logits});
  Tensor y(kScalar, {static_cast<float>(std::log(den) - std::log(num))}, grad);
  if (grad) {
    tape.record({logits, target}, y,
                [logits, target, y, p = std::move(p), num, den]() mutable {
      auto t = target.data();
      std::vector<double> dp(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) dp[i] = 1.0 / den - 2.0 * t[i] / num;
      chain_through_probabilities(logits.shape(), p, dp, y.grad()[0], logits.mutable_grad());
    });
  }
  return y;
}

Tensor composite_loss(const Tensor& logits, const Tensor& target, const LossWeights& w) {
  std::vector<Tensor> terms;
  std::vector<float> weights;
  if (w.bce_weight != 0.f) {
    terms.push_back(bce(logits, target));
    weights.push_back(w.bce_weight);
  }
  if (w.dice_weight != 0.f) {
    terms.push_back(soft_dice_log(logits, target, w.dice_eps));
    weights.push_back(w.dice_weight);
  }
  if (terms.empty()) {
    require_match(logits, target, "composite_loss");
    return scale(sum(logits), 0.f);
  }
  return weighted_sum(terms, weights);
}

Tensor pyramid_loss(const PyramidLogits& heads, const MaskPyramid& pyramid,
                    const LossWeights& w) {
  if (!heads[0].defined()) throw ContractError("pyramid_loss: full-resolution head missing");
  const float coeff[kPyramidLevels] = {1.f, w.alpha, w.beta, w.gamma};
  std::vector<Tensor> terms;
  std::vector<float> weights;
  for (int l = 0; l < kPyramidLevels; ++l) {
    if (!heads[l].defined()) continue;
    const Shape hs = heads[l].shape();
    const Shape ms = pyramid.levels[l].shape();
    if (hs.n != ms.n || hs.h != ms.h || hs.w != ms.w) {
      throw ShapeError("pyramid_loss: head " + hs.str() + " vs mask level " + ms.str());
    }
    const Tensor target = pyramid.mode == MaskMode::multiclass && hs.c > 1
                              ? one_hot(pyramid.levels[l], hs.c)
                              : pyramid.levels[l];
    terms.push_back(composite_loss(heads[l], target, w));
    weights.push_back(coeff[l]);
  }
  return weighted_sum(terms, weights);
}

}  // namespace pyrseg
