// SPDX-License-Identifier: Apache-2.0
/**
 * @file  quantizer.hpp
 * @brief Unsigned fixed-point activation quantization with a learnable PACT
 *        clip, and splitting of B-bit codes into MSB/LSB planes.
 *
 * Codes live on the grid {0, 1, ..., 2^B - 1} over [0, clip] with
 * scale = clip / (2^B - 1). A code splits as code = (msb << lsb_bits) + lsb,
 * which is exact for every code, so the MSB and LSB paths of a linear layer
 * add up to the full B-bit product.
 */
#ifndef PG_QUANTIZER_HPP
#define PG_QUANTIZER_HPP

#include "pg/tensor.hpp"

namespace pg {

class QuantParams {
public:
  /// Throws std::invalid_argument unless bits in [2, 16] and clip > 0.
  QuantParams(int bits, float clip);

  int bits() const noexcept { return bits_; }
  float clip() const noexcept { return clip_; }
  float scale() const noexcept { return scale_; }
  std::int32_t max_code() const noexcept { return (1 << bits_) - 1; }

  bool operator==(const QuantParams &) const = default;

private:
  int bits_;
  float clip_;
  float scale_;
};

struct QuantizedActivation {
  IntTensor codes;
  QuantParams params;
};

struct SplitActivation {
  IntTensor msb;
  IntTensor lsb;
  int msb_bits;
  int lsb_bits;
  QuantParams params;

  const Shape &shape() const noexcept { return msb.shape(); }
};

/// y = min(max(x, 0), clip).
Tensor pact_clip_forward(const Tensor &x, float clip);

struct PactGrad {
  Tensor dx;
  float dclip;
};

/// Pass-through strictly inside (0, clip); the clip collects the upstream
/// gradient of every element at or above it.
PactGrad pact_clip_backward(const Tensor &x, float clip,
                            const Tensor &upstream);

/// round(x / scale) half away from zero, clamped to [0, 2^B - 1].
QuantizedActivation quantize(const Tensor &x, const QuantParams &params);

/// Straight-through estimator: upstream passes where 0 <= x <= clip and is
/// zeroed elsewhere. `x` is the tensor that was fed to quantize().
Tensor quantize_ste_backward(const Tensor &x, const QuantParams &params,
                             const Tensor &upstream);

Tensor dequantize(const QuantizedActivation &q);

/// Splits each code into its top `msb_bits` and remaining low bits.
SplitActivation split_bits(const QuantizedActivation &q, int msb_bits);

/// Inverse of split_bits on the integer codes.
IntTensor merge_bits(const SplitActivation &s);

/// (msb << lsb_bits) * scale.
Tensor dequantize_msb(const SplitActivation &s);
/// lsb * scale.
Tensor dequantize_lsb(const SplitActivation &s);

} // namespace pg

#endif // PG_QUANTIZER_HPP
