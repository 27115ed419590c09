// SPDX-License-Identifier: Apache-2.0
#include "pg/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace pg {

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv_row(const EpochMetrics &m) {
  return std::to_string(m.epoch) + ',' + std::to_string(m.bits) + ',' +
         std::to_string(m.msb_bits) + ',' + format_real(m.model_sp) + ',' +
         format_real(m.b_avg) + ',' + format_real(m.accuracy) + ',' +
         format_real(m.loss) + ',' + format_real(m.train_loss);
}

void write_metrics_csv(std::ostream &os, const std::vector<EpochMetrics> &rows) {
  os << kMetricsCsvHeader << '\n';
  for (const EpochMetrics &m : rows)
    os << metrics_csv_row(m) << '\n';
}

void write_sweep_csv(std::ostream &os, const std::vector<SweepRow> &rows) {
  os << kSweepCsvHeader << '\n';
  for (const SweepRow &r : rows)
    os << r.bits << ',' << r.msb_bits << ',' << format_real(r.threshold) << ','
       << format_real(r.sp) << ',' << format_real(r.b_avg) << ','
       << format_real(r.accuracy) << '\n';
}

void write_layer_csv(std::ostream &os, const EpochMetrics &m,
                     const std::vector<std::size_t> &layer_ids) {
  os << kLayerCsvHeader << '\n';
  for (std::size_t i = 0; i < m.per_layer_sp.size(); ++i)
    os << (i < layer_ids.size() ? layer_ids[i] : i) << ','
       << m.per_layer_features[i] << ',' << format_real(m.per_layer_sp[i])
       << '\n';
}

std::vector<DecisionMap> decision_maps(Model &model, const Tensor &images,
                                       std::size_t layer,
                                       MapAggregate aggregate) {
  if (layer >= model.layers().size() ||
      model.layers()[layer].desc.kind != LayerKind::pg_conv)
    throw std::invalid_argument("decision maps need a gated convolution; layer " +
                                std::to_string(layer) + " is " +
                                (layer < model.layers().size()
                                     ? to_string(model.layers()[layer].desc.kind)
                                     : std::string("out of range")));
  model.forward(images);
  const IntTensor &mask = model.last_mask(layer).mask;
  const std::size_t n = mask.dim(0), c = mask.dim(1), h = mask.dim(2),
                    w = mask.dim(3), hw = h * w;
  std::vector<DecisionMap> maps;
  for (std::size_t i = 0; i < n; ++i) {
    DecisionMap map{layer, h, w, std::vector<float>(hw, 0.0f)};
    for (std::size_t p = 0; p < hw; ++p) {
      int acc = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const int v = mask[(i * c + ch) * hw + p];
        acc = aggregate == MapAggregate::mean ? acc + v : std::max(acc, v);
      }
      map.values[p] = aggregate == MapAggregate::mean
                          ? static_cast<float>(acc) / static_cast<float>(c)
                          : static_cast<float>(acc);
    }
    maps.push_back(std::move(map));
  }
  return maps;
}

std::vector<std::uint8_t> pgm_pixels(const DecisionMap &map) {
  std::vector<std::uint8_t> px(map.values.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const float v = std::clamp(map.values[i], 0.0f, 1.0f);
    px[i] = static_cast<std::uint8_t>(std::lround(255.0f * v));
  }
  return px;
}

void write_pgm(const std::filesystem::path &path, const DecisionMap &map) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  const auto px = pgm_pixels(map);
  out.write(reinterpret_cast<const char *>(px.data()),
            static_cast<std::streamsize>(px.size()));
  if (!out)
    throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::filesystem::path>
export_decision_maps(Model &model, const Tensor &images, std::size_t layer,
                     const std::filesystem::path &out_dir,
                     MapAggregate aggregate) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> paths;
  const auto maps = decision_maps(model, images, layer, aggregate);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "layer%02zu_ex%04zu.pgm", layer, i);
    paths.push_back(out_dir / name);
    write_pgm(paths.back(), maps[i]);
  }
  return paths;
}

} // namespace pg
