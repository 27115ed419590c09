// SPDX-License-Identifier: Apache-2.0
#include "pg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pg {

double avg_bitwidth(int bits, int msb_bits, double sp) {
  if (!(sp >= 0.0 && sp <= 1.0))
    throw std::invalid_argument("sparsity must lie in [0, 1], got " +
                                std::to_string(sp));
  if (msb_bits < 1 || msb_bits >= bits)
    throw std::invalid_argument("average bitwidth needs 1 <= B_hb < B");
  return msb_bits + (1.0 - sp) * (bits - msb_bits);
}

double compute_savings(double sp, int lsb_bits, int bits) {
  if (!(sp >= 0.0 && sp <= 1.0) || lsb_bits < 0 || lsb_bits > bits || bits <= 0)
    throw std::invalid_argument("compute_savings arguments out of range");
  return sp * lsb_bits / bits;
}

float LrSchedule::at(int epoch) const {
  float lr = initial;
  for (int e : decay_epochs)
    if (epoch >= e)
      lr *= factor;
  return lr;
}

void TrainConfig::validate() const {
  if (batch_size == 0)
    throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0)
    throw std::invalid_argument("epochs must be >= 0");
  if (!(lr.initial >= 0.0f))
    throw std::invalid_argument("learning rate must be >= 0");
  if (!(momentum >= 0.0f && momentum < 1.0f))
    throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(threshold_lr_scale > 0.0f) || !std::isfinite(threshold_lr_scale))
    throw std::invalid_argument("threshold_lr_scale must be positive");
}

TrainingDiverged::TrainingDiverged(int e, std::vector<EpochMetrics> h)
    : std::runtime_error("training diverged (non-finite loss) in epoch " +
                         std::to_string(e) +
                         "; parameters restored to the last completed epoch"),
      epoch(e), history(std::move(h)) {}

double softmax_cross_entropy(const Tensor &logits, std::span<const int> labels,
                             Tensor *dlogits, std::size_t *correct) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("label count " + std::to_string(labels.size()) +
                     " does not match batch " + std::to_string(n));
  if (dlogits)
    *dlogits = Tensor(logits.shape());
  double loss = 0.0;
  std::vector<double> p(k);
  for (std::size_t i = 0; i < n; ++i) {
    const float *row = logits.data().data() + i * k;
    const std::size_t arg = static_cast<std::size_t>(
        std::max_element(row, row + k) - row);
    if (correct && static_cast<int>(arg) == labels[i])
      ++*correct;
    const double mx = row[arg];
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      z += p[j] = std::exp(static_cast<double>(row[j]) - mx);
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= k)
      throw std::invalid_argument("label " + std::to_string(labels[i]) +
                                  " outside " + std::to_string(k) + " classes");
    loss += -(static_cast<double>(row[y]) - mx - std::log(z));
    if (dlogits)
      for (std::size_t j = 0; j < k; ++j)
        (*dlogits)[i * k + j] =
            static_cast<float>((p[j] / z - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
  }
  return loss / static_cast<double>(n);
}

void summarize_gates(const std::vector<LayerGateStats> &stats, EpochMetrics &m) {
  m.per_layer_sp.clear();
  m.per_layer_features.clear();
  std::size_t active = 0, total = 0;
  bool shared = !stats.empty();
  double weighted_bits = 0.0;
  for (const LayerGateStats &s : stats) {
    const double sp = 1.0 - static_cast<double>(s.active) / static_cast<double>(s.total);
    m.per_layer_sp.push_back(sp);
    m.per_layer_features.push_back(s.total);
    active += s.active;
    total += s.total;
    weighted_bits += static_cast<double>(s.total) * avg_bitwidth(s.bits, s.msb_bits, sp);
    shared = shared && s.bits == stats.front().bits &&
             s.msb_bits == stats.front().msb_bits;
  }
  if (total == 0) {
    m.model_sp = 0.0;
    m.b_avg = 0.0;
    m.bits = m.msb_bits = 0;
    return;
  }
  m.model_sp = 1.0 - static_cast<double>(active) / static_cast<double>(total);
  if (shared) {
    m.bits = stats.front().bits;
    m.msb_bits = stats.front().msb_bits;
    m.b_avg = avg_bitwidth(m.bits, m.msb_bits, m.model_sp);
  } else {
    m.bits = m.msb_bits = 0;
    m.b_avg = weighted_bits / static_cast<double>(total);
  }
}

EpochMetrics evaluate(Model &model, const Dataset &data,
                      std::size_t batch_size) {
  EpochMetrics m;
  std::vector<LayerGateStats> stats;
  ForwardOptions fo;
  fo.gate_stats = &stats;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - b);
    const Dataset batch = data.subset(order, b, count);
    const Tensor logits = model.forward(batch.images, fo);
    loss += softmax_cross_entropy(logits, batch.labels, nullptr, &correct) *
            static_cast<double>(count);
  }
  m.loss = loss / static_cast<double>(data.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  summarize_gates(stats, m);
  return m;
}

std::vector<EpochMetrics> train(Model &model, const Dataset &train_set,
                                const Dataset &eval_set, const TrainConfig &cfg,
                                const StepObserver &observer) {
  cfg.validate();
  const std::size_t n = cfg.train_limit ? std::min(cfg.train_limit, train_set.size())
                                        : train_set.size();
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  auto params = model.parameters();
  std::vector<std::vector<float>> velocity;
  for (const ParamRef &p : params)
    velocity.emplace_back(p.value.size(), 0.0f);

  const LsbGradient mode =
      cfg.sparse_backprop ? LsbGradient::sparse : LsbGradient::dense;
  std::vector<EpochMetrics> history;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = cfg.lr.at(epoch);
    std::vector<std::vector<float>> snapshot;
    for (const ParamRef &p : params)
      snapshot.emplace_back(p.value.begin(), p.value.end());
    const auto restore = [&] {
      for (std::size_t i = 0; i < params.size(); ++i)
        std::copy(snapshot[i].begin(), snapshot[i].end(), params[i].value.begin());
    };

    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < n; b += cfg.batch_size, ++steps) {
      const std::size_t count = std::min(cfg.batch_size, n - b);
      const Dataset batch = train_set.subset(order, b, count);

      PGCounters counters;
      ForwardOptions fo;
      fo.training = true;
      fo.dense_lsb = !cfg.sparse_backprop;
      fo.counters = &counters;
      const Tensor logits = model.forward(batch.images, fo);
      Tensor dlogits;
      double loss = softmax_cross_entropy(logits, batch.labels, &dlogits);
      model.backward(dlogits, mode, &counters);

      for (Layer &l : model.layers())
        if (l.desc.is_gated() && l.desc.pg.mode == ThresholdMode::learnable) {
          const PenaltyResult pen = threshold_penalty(l.thresholds, l.desc.pg);
          loss += pen.loss;
          for (std::size_t c = 0; c < pen.grad.size(); ++c)
            l.dthresholds[c] += pen.grad[c];
        }

      if (!std::isfinite(loss)) {
        restore();
        throw TrainingDiverged(epoch + 1, history);
      }

      for (std::size_t i = 0; i < params.size(); ++i) {
        ParamRef &p = params[i];
        const Layer &owner = model.layers()[p.layer];
        if (p.kind == ParamKind::threshold &&
            owner.desc.pg.mode == ThresholdMode::fixed)
          continue;
        const float wd = p.kind == ParamKind::weight ? cfg.weight_decay : 0.0f;
        const float step =
            p.kind == ParamKind::threshold ? lr * cfg.threshold_lr_scale : lr;
        auto &v = velocity[i];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
          v[k] = cfg.momentum * v[k] + p.grad[k] + wd * p.value[k];
          p.value[k] -= step * v[k];
        }
        if (p.kind == ParamKind::clip)
          p.value[0] = std::max(p.value[0], 1e-3f);
      }

      loss_sum += loss;
      if (observer)
        observer({epoch + 1, steps, loss, counters});
    }

    EpochMetrics m = evaluate(model, eval_set);
    m.epoch = epoch + 1;
    m.train_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
    history.push_back(std::move(m));
  }
  return history;
}

std::vector<SweepRow> sweep_fixed_threshold(const Model &model,
                                            const Dataset &data,
                                            const std::vector<float> &thresholds,
                                            std::size_t batch_size) {
  std::vector<SweepRow> rows;
  for (float t : thresholds) {
    Model copy = model;
    copy.set_fixed_threshold(t);
    const EpochMetrics m = evaluate(copy, data, batch_size);
    rows.push_back({t, m.bits, m.msb_bits, m.model_sp, m.b_avg, m.accuracy});
  }
  return rows;
}

} // namespace pg
