// SPDX-License-Identifier: Apache-2.0
#include "pg/quantizer.hpp"

#include <algorithm>
#include <cmath>

namespace pg {

QuantParams::QuantParams(int bits, float clip) : bits_(bits), clip_(clip) {
  if (bits < 2 || bits > 16)
    throw std::invalid_argument("quantizer bitwidth must be in [2, 16], got " +
                                std::to_string(bits));
  if (!(clip > 0.0f) || !std::isfinite(clip))
    throw std::invalid_argument("clip threshold must be finite and > 0, got " +
                                std::to_string(clip));
  scale_ = clip / static_cast<float>(max_code());
}

Tensor pact_clip_forward(const Tensor &x, float clip) {
  if (!(clip > 0.0f))
    throw std::invalid_argument("PACT clip must be > 0, got " +
                                std::to_string(clip));
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    y[i] = std::min(std::max(x[i], 0.0f), clip);
  return y;
}

PactGrad pact_clip_backward(const Tensor &x, float clip,
                            const Tensor &upstream) {
  check_same_shape(x.shape(), upstream.shape(), "pact_clip_backward");
  PactGrad g{Tensor(x.shape()), 0.0f};
  double dclip = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (x[i] >= clip)
      dclip += upstream[i];
    else if (x[i] > 0.0f)
      g.dx[i] = upstream[i];
  }
  g.dclip = static_cast<float>(dclip);
  return g;
}

QuantizedActivation quantize(const Tensor &x, const QuantParams &params) {
  IntTensor codes(x.shape());
  const float scale = params.scale();
  const float top = static_cast<float>(params.max_code());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    // std::round rounds half away from zero.
    const float r = std::round(x[i] / scale);
    codes[i] = static_cast<std::int32_t>(std::clamp(r, 0.0f, top));
  }
  return {std::move(codes), params};
}

Tensor quantize_ste_backward(const Tensor &x, const QuantParams &params,
                             const Tensor &upstream) {
  check_same_shape(x.shape(), upstream.shape(), "quantize_ste_backward");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    dx[i] = (x[i] >= 0.0f && x[i] <= params.clip()) ? upstream[i] : 0.0f;
  return dx;
}

Tensor dequantize(const QuantizedActivation &q) {
  Tensor out(q.codes.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>(q.codes[i]) * q.params.scale();
  return out;
}

SplitActivation split_bits(const QuantizedActivation &q, int msb_bits) {
  const int bits = q.params.bits();
  if (msb_bits < 1 || msb_bits >= bits)
    throw std::invalid_argument("MSB width must satisfy 1 <= B_hb < B (B=" +
                                std::to_string(bits) + ", B_hb=" +
                                std::to_string(msb_bits) + ")");
  const int lsb_bits = bits - msb_bits;
  const std::int32_t low_mask = (1 << lsb_bits) - 1;
  SplitActivation s{IntTensor(q.codes.shape()), IntTensor(q.codes.shape()),
                    msb_bits, lsb_bits, q.params};
  for (std::size_t i = 0; i < q.codes.numel(); ++i) {
    s.msb[i] = q.codes[i] >> lsb_bits;
    s.lsb[i] = q.codes[i] & low_mask;
  }
  return s;
}

IntTensor merge_bits(const SplitActivation &s) {
  IntTensor codes(s.shape());
  for (std::size_t i = 0; i < codes.numel(); ++i)
    codes[i] = (s.msb[i] << s.lsb_bits) + s.lsb[i];
  return codes;
}

Tensor dequantize_msb(const SplitActivation &s) {
  Tensor out(s.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>(s.msb[i] << s.lsb_bits) * s.params.scale();
  return out;
}

Tensor dequantize_lsb(const SplitActivation &s) {
  Tensor out(s.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>(s.lsb[i]) * s.params.scale();
  return out;
}

} // namespace pg
