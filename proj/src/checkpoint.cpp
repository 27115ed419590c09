// SPDX-License-Identifier: Apache-2.0
#include "pg/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace pg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

const char *mode_name(ThresholdMode m) {
  return m == ThresholdMode::learnable ? "learnable" : "fixed";
}

ThresholdMode mode_from(const std::string &s) {
  if (s == "learnable")
    return ThresholdMode::learnable;
  if (s == "fixed")
    return ThresholdMode::fixed;
  throw CheckpointError("unknown threshold mode '" + s + "'");
}

json to_json(const PGLayerConfig &c) {
  return {{"bits", c.bits},          {"msb_bits", c.msb_bits},
          {"sigma", c.sigma},        {"delta_target", c.delta_target},
          {"alpha", c.alpha},        {"mode", mode_name(c.mode)},
          {"fixed_threshold", c.fixed_threshold}};
}

PGLayerConfig pg_from(const json &j) {
  PGLayerConfig c;
  c.bits = j.at("bits").get<int>();
  c.msb_bits = j.at("msb_bits").get<int>();
  c.sigma = j.at("sigma").get<float>();
  c.delta_target = j.at("delta_target").get<float>();
  c.alpha = j.at("alpha").get<float>();
  c.mode = mode_from(j.at("mode").get<std::string>());
  c.fixed_threshold = j.at("fixed_threshold").get<float>();
  return c;
}

json to_json(const ModelSpec &s) {
  json layers = json::array();
  for (const LayerDesc &d : s.layers) {
    json l = {{"kind", to_string(d.kind)}, {"in", d.in},         {"out", d.out},
              {"kernel", d.kernel},        {"stride", d.stride}, {"pad", d.pad}};
    if (d.is_gated()) {
      l["pg"] = to_json(d.pg);
      l["clip_init"] = d.clip_init;
    }
    layers.push_back(std::move(l));
  }
  return {{"name", s.name}, {"input_shape", s.input_shape}, {"layers", layers}};
}

ModelSpec spec_from(const json &j) {
  ModelSpec s;
  s.name = j.at("name").get<std::string>();
  s.input_shape = j.at("input_shape").get<Shape>();
  for (const json &l : j.at("layers")) {
    LayerDesc d;
    d.kind = layer_kind_from_string(l.at("kind").get<std::string>());
    d.in = l.at("in").get<std::size_t>();
    d.out = l.at("out").get<std::size_t>();
    d.kernel = l.at("kernel").get<std::size_t>();
    d.stride = l.at("stride").get<std::size_t>();
    d.pad = l.at("pad").get<std::size_t>();
    if (d.is_gated()) {
      d.pg = pg_from(l.at("pg"));
      d.clip_init = l.at("clip_init").get<float>();
    }
    s.layers.push_back(d);
  }
  return s;
}

json to_json(const EpochMetrics &m) {
  return {{"epoch", m.epoch},
          {"train_loss", m.train_loss},
          {"loss", m.loss},
          {"accuracy", m.accuracy},
          {"per_layer_sp", m.per_layer_sp},
          {"per_layer_features", m.per_layer_features},
          {"model_sp", m.model_sp},
          {"b_avg", m.b_avg},
          {"bits", m.bits},
          {"msb_bits", m.msb_bits}};
}

EpochMetrics metrics_from(const json &j) {
  EpochMetrics m;
  m.epoch = j.at("epoch").get<int>();
  m.train_loss = j.at("train_loss").get<double>();
  m.loss = j.at("loss").get<double>();
  m.accuracy = j.at("accuracy").get<double>();
  m.per_layer_sp = j.at("per_layer_sp").get<std::vector<double>>();
  m.per_layer_features = j.at("per_layer_features").get<std::vector<std::size_t>>();
  m.model_sp = j.at("model_sp").get<double>();
  m.b_avg = j.at("b_avg").get<double>();
  m.bits = j.at("bits").get<int>();
  m.msb_bits = j.at("msb_bits").get<int>();
  return m;
}

} // namespace

void write_f32_le(const fs::path &path, std::span<const float> v) {
  std::vector<char> bytes(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(v[i]);
    for (int b = 0; b < 4; ++b)
      bytes[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
  }
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw CheckpointError("failed writing " + path.string());
}

std::vector<float> read_f32_le(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError("cannot open " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  if (bytes.size() % 4 != 0)
    throw CheckpointError(path.string() + ": size " + std::to_string(bytes.size()) +
                          " is not a multiple of 4");
  std::vector<float> v(bytes.size() / 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= std::uint32_t{bytes[i * 4 + b]} << (8 * b);
    v[i] = std::bit_cast<float>(u);
  }
  return v;
}

void save_checkpoint(const fs::path &dir, Model &model,
                     const std::vector<EpochMetrics> &history) {
  fs::create_directories(dir);
  json params = json::array();
  for (const ParamRef &p : model.parameters()) {
    const std::string file = p.name + ".bin";
    write_f32_le(dir / file, p.value);
    params.push_back({{"name", p.name}, {"file", file}, {"shape", p.shape}});
  }
  json hist = json::array();
  for (const EpochMetrics &m : history)
    hist.push_back(to_json(m));
  const json manifest = {{"format_version", kFormatVersion},
                         {"model", to_json(model.spec())},
                         {"parameters", params},
                         {"history", hist}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out)
    throw CheckpointError("failed writing " + (dir / "manifest.json").string());
}

Checkpoint load_checkpoint(const fs::path &dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in)
    throw CheckpointError("no checkpoint manifest at " + mpath.string());
  json manifest;
  try {
    in >> manifest;
    if (manifest.at("format_version").get<int>() != kFormatVersion)
      throw CheckpointError(mpath.string() + ": unsupported format version");
    Checkpoint ck{Model(spec_from(manifest.at("model")), 0), {}};
    auto params = ck.model.parameters();
    const json &stored = manifest.at("parameters");
    if (stored.size() != params.size())
      throw CheckpointError(mpath.string() + ": expected " +
                            std::to_string(params.size()) + " parameters, found " +
                            std::to_string(stored.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const json &s = stored[i];
      if (s.at("name").get<std::string>() != params[i].name ||
          s.at("shape").get<Shape>() != params[i].shape)
        throw CheckpointError(mpath.string() + ": parameter " +
                              std::to_string(i) + " does not match the model (" +
                              params[i].name + ")");
      const auto values = read_f32_le(dir / s.at("file").get<std::string>());
      if (values.size() != params[i].value.size())
        throw CheckpointError(params[i].name + ": expected " +
                              std::to_string(params[i].value.size()) +
                              " values, file holds " + std::to_string(values.size()));
      std::copy(values.begin(), values.end(), params[i].value.begin());
    }
    for (const json &m : manifest.at("history"))
      ck.history.push_back(metrics_from(m));
    return ck;
  } catch (const json::exception &e) {
    throw CheckpointError(mpath.string() + ": " + e.what());
  } catch (const std::invalid_argument &e) {
    throw CheckpointError(mpath.string() + ": " + e.what());
  }
}

} // namespace pg
