#include "pyrseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <thread>

#include "pyrseg/error.hpp"

namespace pyrseg {

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (!(lr > 0.f)) throw ConfigError("train.lr must be positive");
  if (!(clip > 0.f)) throw ConfigError("train.clip must be positive");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (decay_period < 1 || !(decay_factor > 0.0)) {
    throw ConfigError("train.decay_period must be >= 1 and train.decay_factor > 0");
  }
  if (momentum < 0.f || momentum >= 1.f) throw ConfigError("train.momentum must lie in [0, 1)");
}

float learning_rate_at(float lr0, int epoch, double factor, int period) {
  return static_cast<float>(static_cast<double>(lr0) * std::pow(factor, epoch / period));
}

double global_grad_norm(const std::vector<NamedParameter>& params) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) total += static_cast<double>(g) * g;
  }
  return std::sqrt(total);
}

double clip_gradients(const std::vector<NamedParameter>& params, float threshold, ClipMode mode) {
  const double norm = global_grad_norm(params);
  if (mode == ClipMode::value) {
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      Tensor t = p.tensor;
      for (auto& g : t.mutable_grad()) g = std::clamp(g, -threshold, threshold);
    }
    return norm;
  }
  // Norms within a relative 1e-5 of the threshold are left unscaled.
  if (norm > static_cast<double>(threshold) * (1.0 + 1e-5)) {
    const float factor = static_cast<float>(threshold / norm);
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      Tensor t = p.tensor;
      for (auto& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

Optimizer::Optimizer(OptimizerKind kind, float momentum, float weight_decay)
    : kind_(kind), momentum_(momentum), weight_decay_(weight_decay) {}

void Optimizer::step(const std::vector<NamedParameter>& params, float lr) {
  if (first_.empty()) {
    first_.resize(params.size());
    second_.resize(params.size());
  }
  if (first_.size() != params.size()) throw ContractError("optimizer parameter set changed");
  ++steps_;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    if (!t.has_grad()) continue;
    auto w = t.mutable_data();
    auto g = t.grad();
    auto& m = first_[i];
    if (m.empty()) m.assign(w.size(), 0.f);
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t k = 0; k < w.size(); ++k) {
        const float grad = g[k] + weight_decay_ * w[k];
        m[k] = momentum_ * m[k] + grad;
        w[k] -= lr * m[k];
      }
      continue;
    }
    auto& v = second_[i];
    if (v.empty()) v.assign(w.size(), 0.f);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const float grad = g[k] + weight_decay_ * w[k];
      m[k] = static_cast<float>(kBeta1 * m[k] + (1.0 - kBeta1) * grad);
      v[k] = static_cast<float>(kBeta2 * v[k] + (1.0 - kBeta2) * grad * grad);
      const double mhat = m[k] / c1, vhat = v[k] / c2;
      w[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + kEps));
    }
  }
}

Dataset load_split(const Corpus& corpus, const std::string& split) {
  Dataset data;
  for (const auto& e : corpus.split(split)) data.push_back({load_entry(corpus, e), e.family});
  return data;
}

Overlap mask_overlap(const Tensor& predicted, const Tensor& truth, int num_classes) {
  if (predicted.shape() != truth.shape()) {
    throw ShapeError("mask_overlap: " + predicted.shape().str() + " vs " + truth.shape().str());
  }
  auto p = predicted.data();
  auto t = truth.data();
  auto score = [&](float cls, bool binary) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool a = binary ? p[i] > 0.5f : p[i] == cls;
      const bool b = binary ? t[i] > 0.5f : t[i] == cls;
      tp += a && b;
      fp += a && !b;
      fn += !a && b;
    }
    Overlap o;
    if (tp + fp + fn == 0) {
      o.iou = o.dice = 100.0;
      o.empty_union = true;
      return o;
    }
    o.iou = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    o.dice = 100.0 * 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    return o;
  };
  if (num_classes <= 1) return score(1.f, true);
  Overlap mean;
  int counted = 0;
  for (int c = 1; c < num_classes; ++c) {
    const Overlap o = score(static_cast<float>(c), false);
    if (o.empty_union) continue;
    mean.iou += o.iou;
    mean.dice += o.dice;
    ++counted;
  }
  if (counted == 0) return Overlap{100.0, 100.0, true};
  mean.iou /= counted;
  mean.dice /= counted;
  return mean;
}

int worker_threads() {
  if (const char* env = std::getenv("PYRSEG_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

namespace {

Tensor stack(const std::vector<const Tensor*>& parts) {
  Shape s = parts.front()->shape();
  const std::size_t len = s.numel();
  s.n = static_cast<int>(parts.size());
  std::vector<float> out(s.numel());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i]->numel() != len) throw ShapeError("stack: sample sizes differ");
    std::copy(parts[i]->data().begin(), parts[i]->data().end(), out.begin() + i * len);
  }
  return Tensor(s, std::move(out));
}

// Splits a [N,...] tensor into N tensors of batch 1.
std::vector<Tensor> unstack(const Tensor& t) {
  Shape s = t.shape();
  const int n = s.n;
  s.n = 1;
  std::vector<Tensor> out;
  for (int i = 0; i < n; ++i) {
    auto d = t.data().subspan(static_cast<std::size_t>(i) * s.numel(), s.numel());
    out.emplace_back(s, std::vector<float>(d.begin(), d.end()));
  }
  return out;
}

}  // namespace

Metrics evaluate(const Model& model, const Dataset& data) {
  if (data.empty()) throw ContractError("evaluate: empty split");
  const int classes = model.config().num_classes;
  std::vector<Overlap> scores(data.size());
  constexpr std::size_t kBatch = 8;
  const std::size_t batches = (data.size() + kBatch - 1) / kBatch;
  auto run = [&](std::size_t first_batch, std::size_t stride) {
    NoGradGuard guard;
    for (std::size_t b = first_batch; b < batches; b += stride) {
      std::vector<const Tensor*> images;
      const std::size_t lo = b * kBatch, hi = std::min(data.size(), lo + kBatch);
      for (std::size_t i = lo; i < hi; ++i) images.push_back(&data[i].sample.image);
      const auto masks = unstack(logits_to_mask(model.forward(stack(images))[0]));
      for (std::size_t i = lo; i < hi; ++i) {
        scores[i] = mask_overlap(masks[i - lo], data[i].sample.mask, classes);
      }
    }
  };
  const int threads = std::min<int>(worker_threads(), static_cast<int>(batches));
  if (threads <= 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
    for (auto& th : pool) th.join();
  }
  Metrics m;
  m.samples = data.size();
  std::map<Family, std::pair<std::size_t, std::pair<double, double>>> acc;
  for (std::size_t i = 0; i < data.size(); ++i) {
    m.iou += scores[i].iou;
    m.dice += scores[i].dice;
    auto& f = acc[data[i].family];
    ++f.first;
    f.second.first += scores[i].iou;
    f.second.second += scores[i].dice;
  }
  m.iou /= static_cast<double>(data.size());
  m.dice /= static_cast<double>(data.size());
  for (const auto& [family, v] : acc) {
    m.per_family[family] = {v.second.first / static_cast<double>(v.first),
                            v.second.second / static_cast<double>(v.first)};
  }
  return m;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val,
                  std::ostream* log) {
  config.validate();
  if (train_set.empty()) throw ContractError("train: empty training split");
  Model model(config.model, derive_seed(config.seed, 0x6d6f64656cULL));
  TrainResult result{model.clone(), {}, -1, -1.0, config.lr};
  Optimizer optimizer(config.optimizer, config.momentum, config.weight_decay);
  const MaskMode mode = config.model.num_classes > 1 ? MaskMode::multiclass : MaskMode::binary;
  const AugmentOps ops;
  const auto params = model.parameters();
  auto& tape = Tape::current();

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const float lr = learning_rate_at(config.lr, epoch, config.decay_factor, config.decay_period);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(config.seed, 0x1000 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_total = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += config.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + config.batch_size);
      std::vector<SegSample> batch;
      for (std::size_t i = lo; i < hi; ++i) {
        const SegSample& s = train_set[order[i]].sample;
        if (config.augment) {
          const std::uint64_t aug_seed = derive_seed(
              config.seed, (static_cast<std::uint64_t>(epoch) << 32) | order[i]);
          batch.push_back(augment(s, ops, aug_seed));
        } else {
          batch.push_back(s);
        }
      }
      std::vector<const Tensor*> images, masks;
      for (const auto& s : batch) {
        images.push_back(&s.image);
        masks.push_back(&s.mask);
      }
      const Tensor image = stack(images);
      const MaskPyramid pyramid = build_mask_pyramid(stack(masks), mode);

      model.zero_grad();
      Tensor loss = pyramid_loss(model.forward(image), pyramid, config.loss);
      const float value = loss.item();
      if (!std::isfinite(value)) {
        tape.clear();
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch starting at " + std::to_string(lo));
      }
      tape.backward(loss);
      tape.clear();
      clip_gradients(params, config.clip, config.clip_mode);
      optimizer.step(params, lr);
      loss_total += static_cast<double>(value) * static_cast<double>(hi - lo);
    }

    EpochLog entry{epoch, lr, loss_total / static_cast<double>(order.size()), 0.0, 0.0};
    if (!val.empty()) {
      const Metrics m = evaluate(model, val);
      entry.val_iou = m.iou;
      entry.val_dice = m.dice;
    }
    if (entry.val_iou > result.best_val_iou) {
      result.best_val_iou = entry.val_iou;
      result.best_epoch = epoch;
      result.model.copy_parameters_from(model);
    }
    result.log.push_back(entry);
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %d lr %.6g loss %.6f val_iou %.2f val_dice %.2f\n",
                    epoch, static_cast<double>(lr), entry.train_loss, entry.val_iou,
                    entry.val_dice);
      *log << line << std::flush;
    }
  }
  return result;
}

TrainResult train_with_protocol(const TrainConfig& config, const Dataset& train_set,
                                const Dataset& val, std::ostream* log) {
  if (!config.lr_grid) return train(config, train_set, val, log);
  std::optional<TrainResult> best;
  for (float lr : kLearningRateGrid) {
    TrainConfig c = config;
    c.lr = lr;
    if (log) *log << "lr grid: lr0 = " << lr << '\n';
    TrainResult r = train(c, train_set, val, log);
    if (!best || r.best_val_iou > best->best_val_iou) best.emplace(std::move(r));
  }
  return std::move(*best);
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,lr,train_loss,val_iou,val_dice\n";
  char line[160];
  for (const auto& e : log) {
    std::snprintf(line, sizeof line, "%d,%.8g,%.6f,%.2f,%.2f\n", e.epoch,
                  static_cast<double>(e.lr), e.train_loss, e.val_iou, e.val_dice);
    out << line;
  }
}

std::vector<AblationFlags> ablation_rows() {
  return {{false, false, false},
          {true, false, false},
          {false, true, false},
          {true, true, false},
          {true, true, true}};
}

std::vector<AblationRow> ablation_grid(const TrainConfig& base, const Dataset& train_set,
                                       const Dataset& val, const Dataset& test,
                                       const std::vector<AblationFlags>& rows,
                                       std::ostream* log) {
  std::vector<AblationRow> out;
  for (const auto& flags : rows) {
    TrainConfig c = base;
    c.model.use_pvf = flags.pvf;
    c.model.use_dpr = flags.dpr;
    c.model.use_pl = flags.pl;
    if (log) {
      *log << "ablation row pvf=" << flags.pvf << " dpr=" << flags.dpr << " pl=" << flags.pl
           << '\n';
    }
    const TrainResult r = train_with_protocol(c, train_set, val, log);
    out.push_back({flags, r.model.parameter_count(), evaluate(r.model, test)});
  }
  return out;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "pvf,dpr,pl,params";
  for (Family f : kFamilies) out << ',' << to_string(f) << "_iou," << to_string(f) << "_dice";
  out << ",overall_iou,overall_dice\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.flags.pvf << ',' << r.flags.dpr << ',' << r.flags.pl << ',' << r.params;
    for (Family f : kFamilies) {
      const auto it = r.test.per_family.find(f);
      const auto v = it == r.test.per_family.end() ? std::pair<double, double>{0.0, 0.0}
                                                   : it->second;
      std::snprintf(buf, sizeof buf, ",%.2f,%.2f", v.first, v.second);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.2f,%.2f\n", r.test.iou, r.test.dice);
    out << buf;
  }
}

}  // namespace pyrseg
