#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "pyrseg/loss.hpp"
#include "pyrseg/model.hpp"
#include "pyrseg/synth.hpp"

namespace pyrseg {

enum class OptimizerKind { sgd, adam };
enum class ClipMode { global_norm, value };

inline constexpr std::array<float, 3> kLearningRateGrid{5e-4f, 2e-4f, 1e-3f};

struct TrainConfig {
  ModelConfig model;
  LossWeights loss;
  float lr = 1e-3f;
  // Runs every rate in kLearningRateGrid and keeps the best validation IoU.
  bool lr_grid = false;
  int epochs = 30;
  int batch_size = 8;
  double decay_factor = 0.8;
  int decay_period = 2;
  float clip = 0.1f;
  ClipMode clip_mode = ClipMode::global_norm;
  OptimizerKind optimizer = OptimizerKind::adam;
  float momentum = 0.9f;
  float weight_decay = 0.f;
  std::uint64_t seed = 1;
  bool augment = true;

  void validate() const;
};

// lr0 * factor^floor(epoch / period), epochs counted from 0.
float learning_rate_at(float lr0, int epoch, double factor = 0.8, int period = 2);

double global_grad_norm(const std::vector<NamedParameter>& params);
// Global-norm mode rescales all gradients by threshold / norm when the norm
// exceeds the threshold; value mode clamps each entry to [-threshold,
// threshold]. Returns the norm before clipping.
double clip_gradients(const std::vector<NamedParameter>& params, float threshold, ClipMode mode);

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, float momentum, float weight_decay);
  // In-place update, outside any tape. Parameters without a gradient are
  // skipped.
  void step(const std::vector<NamedParameter>& params, float lr);

 private:
  OptimizerKind kind_;
  float momentum_;
  float weight_decay_;
  long long steps_ = 0;
  std::vector<std::vector<float>> first_, second_;
};

struct LabeledSample {
  SegSample sample;
  Family family = Family::pupil;
};
using Dataset = std::vector<LabeledSample>;

Dataset load_split(const Corpus& corpus, const std::string& split);

struct Overlap {
  double iou = 0.0;   // percent
  double dice = 0.0;  // percent
  bool empty_union = false;
};

// IoU = TP/(TP+FP+FN), Dice = 2TP/(2TP+FP+FN), both in percent. An empty
// union counts as a perfect match. For class-index masks with num_classes
// > 1 the scores are averaged over foreground classes with a nonempty union.
Overlap mask_overlap(const Tensor& predicted, const Tensor& truth, int num_classes = 1);

struct Metrics {
  double iou = 0.0;
  double dice = 0.0;
  std::size_t samples = 0;
  std::map<Family, std::pair<double, double>> per_family;  // (iou, dice)
};

// Per-sample scores averaged over the split. Honours PYRSEG_THREADS.
Metrics evaluate(const Model& model, const Dataset& data);

struct EpochLog {
  int epoch = 0;
  float lr = 0.f;
  double train_loss = 0.0;
  double val_iou = 0.0;
  double val_dice = 0.0;
};

struct TrainResult {
  Model model;  // parameters of the best validation epoch
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_iou = -1.0;
  float lr0 = 0.f;
};

// Train on `train`, select the best epoch on `val`. Throws NumericError for a
// non-finite loss. Messages go to `log` when provided.
TrainResult train(const TrainConfig& config, const Dataset& train, const Dataset& val,
                  std::ostream* log = nullptr);
// Honours config.lr_grid.
TrainResult train_with_protocol(const TrainConfig& config, const Dataset& train,
                                const Dataset& val, std::ostream* log = nullptr);

// Header `epoch,lr,train_loss,val_iou,val_dice`.
void write_metrics_csv(std::ostream& out, const std::vector<EpochLog>& log);

struct AblationFlags {
  bool pvf = false;
  bool dpr = false;
  bool pl = false;
};
// none, PVF, DPR, PVF+DPR, PVF+DPR+PL.
std::vector<AblationFlags> ablation_rows();

struct AblationRow {
  AblationFlags flags;
  std::size_t params = 0;
  Metrics test;
};

std::vector<AblationRow> ablation_grid(const TrainConfig& base, const Dataset& train,
                                       const Dataset& val, const Dataset& test,
                                       const std::vector<AblationFlags>& rows = ablation_rows(),
                                       std::ostream* log = nullptr);

// pvf,dpr,pl,params, then iou/dice pairs per family and overall (2 decimals).
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

// Worker thread cap from PYRSEG_THREADS (default 1).
int worker_threads();

}  // namespace pyrseg
