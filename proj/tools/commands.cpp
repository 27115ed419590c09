// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include "pg/bench.hpp"
#include "pg/checkpoint.hpp"
#include "pg/dataset.hpp"
#include "pg/report.hpp"
#include "pg/trainer.hpp"

#include <fstream>
#include <iostream>

namespace pg::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path &path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  return out;
}

Dataset eval_set(const ExperimentConfig &cfg) {
  Dataset d = load_idx_dataset(cfg.dataset_resolved, "t10k");
  return cfg.eval_limit ? d.head(cfg.eval_limit) : d;
}

std::vector<std::size_t> gated_layers(const Model &m) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < m.layers().size(); ++i)
    if (m.layers()[i].desc.is_gated())
      ids.push_back(i);
  return ids;
}

fs::path checkpoint_dir(const ExperimentConfig &cfg) {
  return fs::path(cfg.output) / "checkpoint";
}

} // namespace

void apply_overrides(ExperimentConfig &cfg, const Overrides &o) {
  if (o.out)
    cfg.output = o.out->string();
  if (o.seed)
    cfg.train.seed = *o.seed;
}

int cmd_train(const ExperimentConfig &cfg) {
  const Dataset train_set = load_idx_dataset(cfg.dataset_resolved, "train");
  const Dataset test_set = eval_set(cfg);
  Model model(model_spec_for(cfg), cfg.train.seed);

  std::vector<EpochMetrics> history;
  int status = 0;
  try {
    history = train(model, train_set, test_set, cfg.train);
  } catch (const TrainingDiverged &e) {
    std::cerr << "pg: " << e.what() << '\n';
    history = e.history;
    status = 1;
  }
  for (const EpochMetrics &m : history)
    std::cout << "epoch " << m.epoch << "  loss " << format_real(m.train_loss)
              << "  acc " << format_real(m.accuracy) << "  Sp "
              << format_real(m.model_sp) << "  B_avg " << format_real(m.b_avg)
              << '\n';

  const fs::path out(cfg.output);
  auto metrics = open_out(out / "metrics.csv");
  write_metrics_csv(metrics, history);
  if (!history.empty()) {
    auto layers = open_out(out / "layers.csv");
    write_layer_csv(layers, history.back(), gated_layers(model));
  }
  open_out(out / "config.ini") << serialize_config(cfg);
  save_checkpoint(checkpoint_dir(cfg), model, history);
  return status;
}

int cmd_eval(const ExperimentConfig &cfg) {
  Checkpoint ck = load_checkpoint(checkpoint_dir(cfg));
  EpochMetrics m = evaluate(ck.model, eval_set(cfg));
  if (!ck.history.empty()) {
    m.epoch = ck.history.back().epoch;
    m.train_loss = ck.history.back().train_loss;
  }
  auto out = open_out(fs::path(cfg.output) / "eval.csv");
  write_metrics_csv(out, {m});
  std::cout << "accuracy " << format_real(m.accuracy) << "  Sp "
            << format_real(m.model_sp) << "  B_avg " << format_real(m.b_avg)
            << '\n';
  return 0;
}

int cmd_sweep(const ExperimentConfig &cfg) {
  const Checkpoint ck = load_checkpoint(checkpoint_dir(cfg));
  const auto rows = sweep_fixed_threshold(ck.model, eval_set(cfg), cfg.sweep_thresholds);
  auto out = open_out(fs::path(cfg.output) / "sweep.csv");
  write_sweep_csv(out, rows);
  write_sweep_csv(std::cout, rows);
  return 0;
}

int cmd_bench(const ExperimentConfig &cfg) {
  BenchOptions o;
  o.dims = cfg.bench_dims;
  o.sparsities = cfg.bench_sparsities;
  o.repeats = cfg.bench_repeats;
  o.seed = cfg.bench_seed;
  const auto rows = bench_kernels(o);
  auto out = open_out(fs::path(cfg.output) / "bench.csv");
  write_bench_csv(out, rows);
  write_bench_csv(std::cout, rows);
  return 0;
}

int cmd_export_maps(const ExperimentConfig &cfg) {
  Checkpoint ck = load_checkpoint(checkpoint_dir(cfg));
  const Dataset examples = eval_set(cfg).head(cfg.maps_count);
  const auto paths = export_decision_maps(ck.model, examples.images, cfg.maps_layer,
                                          fs::path(cfg.output) / "maps",
                                          cfg.maps_aggregate);
  std::cout << "wrote " << paths.size() << " maps to "
            << (fs::path(cfg.output) / "maps").string() << '\n';
  return 0;
}

} // namespace pg::cli
