// SPDX-License-Identifier: Apache-2.0
// Naive reference implementations used as test oracles. Nothing here calls
// into the engine's kernels.
#ifndef PG_TESTS_ORACLES_HPP
#define PG_TESTS_ORACLES_HPP

#include "pg/quantizer.hpp"
#include "pg/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <vector>

namespace oracle {

using pg::IntTensor;
using pg::Shape;
using pg::Tensor;

inline Tensor random_tensor(const Shape &shape, std::mt19937_64 &rng,
                            float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(shape);
  for (float &v : t.data())
    v = u(rng);
  return t;
}

inline IntTensor random_codes(const Shape &shape, int bits, std::mt19937_64 &rng) {
  std::uniform_int_distribution<int> u(0, (1 << bits) - 1);
  IntTensor t(shape);
  for (auto &v : t.data())
    v = u(rng);
  return t;
}

inline IntTensor random_mask(const Shape &shape, double density,
                             std::mt19937_64 &rng) {
  std::bernoulli_distribution b(density);
  IntTensor t(shape);
  for (auto &v : t.data())
    v = b(rng) ? 1 : 0;
  return t;
}

/// Distance in units in the last place between two finite floats.
inline std::int64_t ulp_distance(float a, float b) {
  const auto key = [](float f) {
    const auto i = static_cast<std::int64_t>(std::bit_cast<std::int32_t>(f));
    return i < 0 ? std::int64_t{INT32_MIN} - i : i;
  };
  return std::llabs(key(a) - key(b));
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

/// Triple loop, double accumulation.
inline std::vector<double> matmul(const Tensor &a, const Tensor &b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < k; ++q)
        s += static_cast<double>(a[i * k + q]) * b[q * n + j];
      out[i * n + j] = s;
    }
  return out;
}

/// Direct NCHW convolution with six nested loops; `x` is given as a
/// callable returning the input value at (n, c, h, w) in long double.
template <class Input>
std::vector<long double> conv_direct(Input x, std::size_t n, std::size_t cin,
                                     std::size_t h, std::size_t w,
                                     const Tensor &weight, std::size_t stride,
                                     std::size_t pad) {
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<long double> out(n * cout * oh * ow, 0.0L);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          long double s = 0.0L;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                const long ix = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) ||
                    ix >= static_cast<long>(w))
                  continue;
                s += static_cast<long double>(
                         weight[((o * cin + c) * kh + i) * kw + j]) *
                     x(b, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          out[((b * cout + o) * oh + y) * ow + xx] = s;
        }
  return out;
}

/// Value of an integer code on the activation grid, exact in long double.
inline long double grid_value(std::int32_t code, float scale) {
  return static_cast<long double>(code) * static_cast<long double>(scale);
}

/// Codes of a B-bit activation tensor split by hand.
inline pg::SplitActivation split_by_hand(const IntTensor &codes, int bits,
                                         int msb_bits, float clip) {
  const int lb = bits - msb_bits;
  IntTensor msb(codes.shape()), lsb(codes.shape());
  for (std::size_t i = 0; i < codes.numel(); ++i) {
    msb[i] = codes[i] / (1 << lb);
    lsb[i] = codes[i] % (1 << lb);
  }
  return {msb, lsb, msb_bits, lb, pg::QuantParams(bits, clip)};
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

} // namespace oracle

#endif // PG_TESTS_ORACLES_HPP
