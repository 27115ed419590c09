// SPDX-License-Identifier: Apache-2.0
/**
 * @file  model.hpp
 * @brief Small sequential networks built from full-precision and
 *        precision-gated layers, with hand-written backward passes.
 */
#ifndef PG_MODEL_HPP
#define PG_MODEL_HPP

#include "pg/pg_layer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pg {

enum class LayerKind { conv, dense, pg_conv, pg_dense, relu, global_avg_pool };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string &s);

struct LayerDesc {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;  // input channels / features
  std::size_t out = 0; // output channels / features
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
  PGLayerConfig pg{};    // gated layers only
  float clip_init = 1.0f; // initial PACT clip of a gated layer's input

  bool is_gated() const {
    return kind == LayerKind::pg_conv || kind == LayerKind::pg_dense;
  }
  bool has_weights() const { return kind == LayerKind::conv || kind == LayerKind::dense || is_gated(); }
  bool operator==(const LayerDesc &) const = default;
};

struct ModelSpec {
  std::string name;
  Shape input_shape; // per example, e.g. {1, 28, 28}
  std::vector<LayerDesc> layers;

  /// Throws std::invalid_argument when a gated layer is misconfigured or
  /// consecutive layers disagree on widths.
  void validate() const;
  bool operator==(const ModelSpec &) const = default;
};

/// 784-128-10 perceptron with gated dense layers.
ModelSpec mlp_spec(const PGLayerConfig &pg);

/// Full-precision stem conv followed by five gated 3x3 convolutions
/// (16, 16, 32, 32, 64, 64 channels), global average pooling and a dense
/// classifier.
ModelSpec cnn_spec(const PGLayerConfig &pg, std::size_t in_channels = 1);

/// Applies `pg` to every gated layer of `spec`.
void set_pg_config(ModelSpec &spec, const PGLayerConfig &pg);

/// Per-layer gate statistics of one forward pass.
struct LayerGateStats {
  std::size_t layer = 0;
  std::size_t active = 0;
  std::size_t total = 0;
  int bits = 0;
  int msb_bits = 0;
};

struct ForwardOptions {
  bool training = false;
  bool dense_lsb = false;
  PGCounters *counters = nullptr;
  /// Accumulated across calls: one entry per gated layer, in order.
  std::vector<LayerGateStats> *gate_stats = nullptr;
};

struct Layer {
  LayerDesc desc;
  Tensor weight, bias;
  float clip = 1.0f;
  GateThresholds thresholds;

  Tensor dweight, dbias;
  float dclip = 0.0f;
  std::vector<float> dthresholds;

  // Forward cache for backward.
  Tensor input;
  std::optional<SplitActivation> split;
  std::optional<PGForward> gated;
};

enum class ParamKind { weight, bias, clip, threshold };

struct ParamRef {
  std::string name; // layer path, e.g. "layer02.pg_conv.weight"
  ParamKind kind;
  std::size_t layer;
  Shape shape;
  std::span<float> value;
  std::span<float> grad;
};

class Model {
public:
  Model(ModelSpec spec, std::uint64_t seed);

  const ModelSpec &spec() const noexcept { return spec_; }
  std::vector<Layer> &layers() noexcept { return layers_; }
  const std::vector<Layer> &layers() const noexcept { return layers_; }

  /// `x` is (batch, ...input_shape). Returns logits (batch, classes).
  Tensor forward(const Tensor &x, const ForwardOptions &opts = {});

  /// Backpropagates dL/dlogits through the cached forward pass and fills
  /// every layer's gradient fields.
  void backward(const Tensor &dlogits, LsbGradient mode,
                PGCounters *counters = nullptr);

  std::vector<ParamRef> parameters();

  /// Switches every gated layer to fixed mode with the given threshold.
  void set_fixed_threshold(float threshold);

  /// Mask of a gated layer from the most recent forward pass.
  const GateMask &last_mask(std::size_t layer) const;

private:
  ModelSpec spec_;
  std::vector<Layer> layers_;
};

} // namespace pg

#endif // PG_MODEL_HPP
