// SPDX-License-Identifier: Apache-2.0
/**
 * @file  trainer.hpp
 * @brief SGD training with the threshold penalty, evaluation, gating metrics
 *        and the fixed-threshold sweep.
 */
#ifndef PG_TRAINER_HPP
#define PG_TRAINER_HPP

#include "pg/dataset.hpp"
#include "pg/model.hpp"

#include <functional>
#include <stdexcept>
#include <vector>

namespace pg {

/// B_hb + (1 - sp) * (B - B_hb). Throws std::invalid_argument when
/// sp is outside [0, 1] or B_hb >= B.
double avg_bitwidth(int bits, int msb_bits, double sp);

/// Fraction of the original compute saved: sp * B_lb / B.
double compute_savings(double sp, int lsb_bits, int bits);

struct LrSchedule {
  float initial = 0.05f;
  std::vector<int> decay_epochs; // 0-based epochs at which lr is multiplied
  float factor = 0.1f;

  float at(int epoch) const;
  bool operator==(const LrSchedule &) const = default;
};

struct TrainConfig {
  std::size_t batch_size = 64;
  int epochs = 10;
  LrSchedule lr;
  float momentum = 0.9f;
  float weight_decay = 0.0f; // applied to weights only
  /// Multiplies the step size of the gating thresholds.
  float threshold_lr_scale = 1.0f;
  std::uint64_t seed = 1;
  bool sparse_backprop = true;
  std::size_t train_limit = 0; // 0 = whole training set

  void validate() const;
  bool operator==(const TrainConfig &) const = default;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0; // task loss + threshold penalty, mean over steps
  double loss = 0.0;       // evaluation cross-entropy
  double accuracy = 0.0;   // top-1 on the evaluation set
  std::vector<double> per_layer_sp;
  std::vector<std::size_t> per_layer_features;
  double model_sp = 0.0;
  double b_avg = 0.0;
  int bits = 0;     // shared B of the gated layers, 0 if they differ
  int msb_bits = 0; // shared B_hb, 0 if they differ

  bool operator==(const EpochMetrics &) const = default;
};

/// Folds per-layer gate statistics into model-level Sp and B_avg; the
/// model Sp is the feature-count weighted mean of the layer values.
void summarize_gates(const std::vector<LayerGateStats> &stats, EpochMetrics &m);

/// Forward-only pass over `data`; accuracy is top-1 and Sp is measured on
/// these examples.
EpochMetrics evaluate(Model &model, const Dataset &data,
                      std::size_t batch_size = 100);

struct StepInfo {
  int epoch;
  std::size_t step;
  double loss;
  PGCounters counters; // this step only
};

using StepObserver = std::function<void(const StepInfo &)>;

/// NaN/inf loss. The model holds the parameters of the last completed epoch.
class TrainingDiverged : public std::runtime_error {
public:
  TrainingDiverged(int epoch, std::vector<EpochMetrics> history);
  int epoch;
  std::vector<EpochMetrics> history;
};

/// Minimizes cross-entropy + sigma * ||delta - target||^2 with momentum SGD.
/// With sparse_backprop the threshold gradient uses the mask-squared rule;
/// without it every position contributes through the sigmoid surrogate.
std::vector<EpochMetrics> train(Model &model, const Dataset &train_set,
                                const Dataset &eval_set, const TrainConfig &cfg,
                                const StepObserver &observer = {});

struct SweepRow {
  float threshold;
  int bits;
  int msb_bits;
  double sp;
  double b_avg;
  double accuracy;
};

/// Evaluates a copy of `model` with every gate fixed at each threshold.
std::vector<SweepRow> sweep_fixed_threshold(const Model &model,
                                            const Dataset &data,
                                            const std::vector<float> &thresholds,
                                            std::size_t batch_size = 100);

/// Mean softmax cross-entropy over the batch; fills dlogits when non-null.
double softmax_cross_entropy(const Tensor &logits, std::span<const int> labels,
                             Tensor *dlogits, std::size_t *correct = nullptr);

} // namespace pg

#endif // PG_TRAINER_HPP
