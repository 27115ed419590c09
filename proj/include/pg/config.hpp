// SPDX-License-Identifier: Apache-2.0
/**
 * @file  config.hpp
 * @brief INI experiment configuration.
 *
 * Sections and keys (every key optional unless noted):
 *
 *   [experiment] model = mlp | cnn (required)
 *                dataset = directory holding train-/t10k- IDX files
 *                output = results directory (default "out")
 *                eval_limit = evaluate on the first N test examples (0 = all)
 *   [pg]         bits, msb_bits, sigma, delta_target, alpha,
 *                mode = learnable | fixed, fixed_threshold
 *   [train]      batch_size, epochs, lr, lr_decay_epochs (comma list),
 *                lr_decay_factor, momentum, weight_decay,
 *                threshold_lr_scale, seed,
 *                sparse_backprop = true | false, train_limit
 *   [sweep]      thresholds (comma list)
 *   [bench]      dims (list of MxKxN, comma separated), sparsities, repeats,
 *                seed
 *   [maps]       layer, count, aggregate = mean | max
 *
 * A relative dataset path is resolved against the config file's directory,
 * then against $PG_DATA_DIR. An empty dataset key means $PG_DATA_DIR itself.
 */
#ifndef PG_CONFIG_HPP
#define PG_CONFIG_HPP

#include "pg/bench.hpp"
#include "pg/pg_layer.hpp"
#include "pg/report.hpp"
#include "pg/trainer.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace pg {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string model = "mlp";
  std::string dataset;                    // as written in the file
  std::filesystem::path dataset_resolved; // existing directory
  std::string output = "out";
  std::size_t eval_limit = 0;

  PGLayerConfig pg;
  TrainConfig train;

  std::vector<float> sweep_thresholds{-4, -2, -1, 0, 1, 2, 3};

  std::vector<ProductDims> bench_dims = resnet20_layer_dims();
  std::vector<double> bench_sparsities{0.0, 0.5, 0.76, 0.9, 0.99, 1.0};
  int bench_repeats = 5;
  std::uint64_t bench_seed = 7;

  std::size_t maps_layer = 1;
  std::size_t maps_count = 8;
  MapAggregate maps_aggregate = MapAggregate::mean;

  bool operator==(const ExperimentConfig &) const = default;
};

/// Parses INI text. `base_dir` anchors a relative dataset path. Unknown
/// sections or keys, malformed values and missing dataset directories throw
/// ConfigError.
ExperimentConfig parse_config(const std::string &text,
                              const std::filesystem::path &base_dir = {});
ExperimentConfig load_config(const std::filesystem::path &path);

/// Canonical INI text; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig &c);

/// Model spec named by the config with its [pg] bundle applied.
ModelSpec model_spec_for(const ExperimentConfig &c);

} // namespace pg

#endif // PG_CONFIG_HPP
