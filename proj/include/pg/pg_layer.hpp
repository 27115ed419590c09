// SPDX-License-Identifier: Apache-2.0
/**
 * @file  pg_layer.hpp
 * @brief Precision-gated linear layers (convolution and dense).
 *
 * A gated layer receives its input already split into MSB and LSB planes.
 * The prediction phase computes O_hb = W * (msb << lsb_bits) * scale (+ bias)
 * densely. Every output feature whose O_hb exceeds its channel threshold is
 * then refined by the update phase, O = O_hb + O_lb with O_lb = W * lsb * scale,
 * evaluated only at the gated positions through SDDMM.
 *
 * Backward follows the mask-squared formulation: the threshold receives
 * 2 * mask * O_lb * d sigmoid(alpha (O_hb - delta)) / d delta per position, so
 * it only needs the O_lb values the forward pass already produced, and the LSB
 * weight gradient touches exactly the gated positions.
 */
#ifndef PG_PG_LAYER_HPP
#define PG_PG_LAYER_HPP

#include "pg/kernels.hpp"
#include "pg/quantizer.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace pg {

enum class ThresholdMode { learnable, fixed };

struct PGLayerConfig {
  int bits = 4;
  int msb_bits = 2;
  float sigma = 0.0f;        // penalty factor on (delta - delta_target)^2
  float delta_target = 0.0f; // gating target
  float alpha = 5.0f;        // surrogate sigmoid slope
  ThresholdMode mode = ThresholdMode::learnable;
  float fixed_threshold = 0.0f; // used by every channel in fixed mode

  int lsb_bits() const noexcept { return bits - msb_bits; }
  /// Throws std::invalid_argument on an inconsistent bundle.
  void validate() const;
  bool operator==(const PGLayerConfig &) const = default;
};

/// One threshold per output channel, in the real units of O_hb.
struct GateThresholds {
  std::vector<float> delta;

  static GateThresholds filled(std::size_t channels, float value) {
    return {std::vector<float>(channels, value)};
  }
};

struct GateMask {
  IntTensor mask; // 1 where the feature receives the LSB update

  std::size_t active() const;
  /// Fraction of features left at low precision.
  double sparsity() const;
};

/// MAC counters for one or more gated-layer calls.
struct PGCounters {
  std::uint64_t msb_forward = 0;
  std::uint64_t lsb_forward = 0;
  std::uint64_t msb_backward = 0;   // dense dW through the MSB plane
  std::uint64_t lsb_backward = 0;   // dW through the LSB plane
  std::uint64_t input_backward = 0; // dInput

  PGCounters &operator+=(const PGCounters &o);
};

/// How the threshold gradient is formed on the backward pass.
enum class LsbGradient {
  /// mask-squared rule; only gated positions contribute.
  sparse,
  /// plain mask with a sigmoid surrogate; every position contributes, which
  /// needs O_lb everywhere (forward must run with dense_lsb).
  dense,
};

struct PGOptions {
  std::size_t stride = 1; // convolution only
  std::size_t pad = 0;    // convolution only
  std::span<const float> bias{};
  /// Evaluate O_lb at every position (the output still uses the mask).
  bool dense_lsb = false;
  /// 1 combines with mask, 2 with mask * mask. Binary masks make both equal.
  int mask_power = 1;
  PGCounters *counters = nullptr;
};

struct PGForward {
  Tensor out;     // O
  Tensor out_hb;  // prediction-phase output, including bias
  Tensor out_lb;  // update-phase partial product; zero where not computed
  GateMask mask;
  double sparsity = 0.0;
  bool dense_lsb = false;
};

struct PGLayerGrads {
  Tensor dW;
  std::vector<float> dDelta;
  Tensor dInput;
  std::vector<float> dBias;
};

/// Thresholds actually compared against O_hb: the learned vector, or the
/// fixed value broadcast over channels.
std::vector<float> effective_thresholds(const GateThresholds &thresholds,
                                        const PGLayerConfig &cfg,
                                        std::size_t channels);

/// Convolution: split is NCHW codes, W is (Cout, Cin, kh, kw).
PGForward pg_forward(const SplitActivation &split, const Tensor &W,
                     const GateThresholds &thresholds, const PGLayerConfig &cfg,
                     const PGOptions &opts = {});

PGLayerGrads pg_backward(const SplitActivation &split, const Tensor &W,
                         const GateThresholds &thresholds,
                         const PGLayerConfig &cfg, const PGForward &fwd,
                         const Tensor &upstream, LsbGradient mode,
                         const PGOptions &opts = {});

/// Dense: split is (batch, in) codes, W is (out, in); thresholds per output.
PGForward pg_dense_forward(const SplitActivation &split, const Tensor &W,
                           const GateThresholds &thresholds,
                           const PGLayerConfig &cfg, const PGOptions &opts = {});

PGLayerGrads pg_dense_backward(const SplitActivation &split, const Tensor &W,
                               const GateThresholds &thresholds,
                               const PGLayerConfig &cfg, const PGForward &fwd,
                               const Tensor &upstream, LsbGradient mode,
                               const PGOptions &opts = {});

struct PenaltyResult {
  double loss;
  std::vector<float> grad;
};

/// sigma * sum_c (delta_c - target)^2 and its gradient. Learnable mode only.
PenaltyResult threshold_penalty(const GateThresholds &thresholds,
                                const PGLayerConfig &cfg);

/// d sigmoid(alpha (o_hb - delta)) / d delta = -alpha s (1 - s).
double surrogate_grad(double o_hb, double delta, double alpha);

/// Threshold gradient contribution of one output feature.
double threshold_grad_term(double upstream, double o_hb, double o_lb,
                           bool gated, double delta, double alpha,
                           LsbGradient mode);

} // namespace pg

#endif // PG_PG_LAYER_HPP
