// SPDX-License-Identifier: Apache-2.0
/**
 * @file  checkpoint.hpp
 * @brief Model snapshots: a JSON manifest with the architecture, gating
 *        configuration and metrics history, plus one raw little-endian
 *        float32 file per parameter tensor.
 *
 * Layout of a checkpoint directory:
 *   manifest.json
 *   layer01.pg_conv.weight.bin, layer01.pg_conv.clip.bin, ...
 */
#ifndef PG_CHECKPOINT_HPP
#define PG_CHECKPOINT_HPP

#include "pg/model.hpp"
#include "pg/trainer.hpp"

#include <filesystem>
#include <stdexcept>
#include <vector>

namespace pg {

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  Model model;
  std::vector<EpochMetrics> history;
};

void save_checkpoint(const std::filesystem::path &dir, Model &model,
                     const std::vector<EpochMetrics> &history);

/// Rebuilds the model from the manifest and overwrites every parameter with
/// the stored values. Missing files or size mismatches throw CheckpointError.
Checkpoint load_checkpoint(const std::filesystem::path &dir);

void write_f32_le(const std::filesystem::path &path, std::span<const float> v);
std::vector<float> read_f32_le(const std::filesystem::path &path);

} // namespace pg

#endif // PG_CHECKPOINT_HPP
