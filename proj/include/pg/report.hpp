// SPDX-License-Identifier: Apache-2.0
/**
 * @file  report.hpp
 * @brief Results tables (CSV) and decision-map images (binary PGM).
 */
#ifndef PG_REPORT_HPP
#define PG_REPORT_HPP

#include "pg/dataset.hpp"
#include "pg/model.hpp"
#include "pg/trainer.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace pg {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_real(double v);

inline constexpr const char *kMetricsCsvHeader =
    "epoch,B,B_hb,Sp,B_avg,accuracy,loss,train_loss";
inline constexpr const char *kSweepCsvHeader =
    "B,B_hb,threshold,Sp,B_avg,accuracy";
inline constexpr const char *kLayerCsvHeader = "layer,features,Sp";

void write_metrics_csv(std::ostream &os, const std::vector<EpochMetrics> &rows);
std::string metrics_csv_row(const EpochMetrics &m);
void write_sweep_csv(std::ostream &os, const std::vector<SweepRow> &rows);
void write_layer_csv(std::ostream &os, const EpochMetrics &m,
                     const std::vector<std::size_t> &layer_ids);

enum class MapAggregate { mean, max };

/// Per-position high-precision ratio of one gated convolution for one
/// example, aggregated over output channels.
struct DecisionMap {
  std::size_t layer = 0;
  std::size_t height = 0, width = 0;
  std::vector<float> values; // row-major, each in [0, 1]
};

/// Runs `images` (N, C, H, W) through the model and returns one map per
/// example for gated convolution `layer`. Throws std::invalid_argument if
/// the layer is not a gated convolution.
std::vector<DecisionMap> decision_maps(Model &model, const Tensor &images,
                                       std::size_t layer,
                                       MapAggregate aggregate = MapAggregate::mean);

/// 8-bit grayscale P5 PGM; pixel = round(255 * value).
void write_pgm(const std::filesystem::path &path, const DecisionMap &map);
std::vector<std::uint8_t> pgm_pixels(const DecisionMap &map);

/// Writes `<out_dir>/layerLL_exNNNN.pgm` per map and returns the paths.
std::vector<std::filesystem::path>
export_decision_maps(Model &model, const Tensor &images, std::size_t layer,
                     const std::filesystem::path &out_dir,
                     MapAggregate aggregate = MapAggregate::mean);

} // namespace pg

#endif // PG_REPORT_HPP
