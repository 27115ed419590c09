// SPDX-License-Identifier: Apache-2.0
/**
 * @file  kernels.hpp
 * @brief Dense GEMM, sampled dense-dense matrix multiplication (SDDMM) and
 *        im2col convolution lowering.
 *
 * All products take 32-bit real operands and accumulate in double precision
 * in a fixed order. Products of a float and a small integer code are exact
 * in double, which is what lets the MSB and LSB partial products of a
 * precision-gated layer add up to the full B-bit product.
 */
#ifndef PG_KERNELS_HPP
#define PG_KERNELS_HPP

#include "pg/tensor.hpp"

#include <cstdint>

namespace pg {

/// Multiply-accumulate counters. Kernels add to whichever field matches
/// the work they perform; callers decide what a field means.
struct MacCounter {
  std::uint64_t dense = 0;
  std::uint64_t sampled = 0;

  void reset() { *this = {}; }
};

/// Row-compressed list of the mask=1 coordinates of an M x N mask.
struct MaskCoords {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> row_ptr; // rows + 1 entries
  std::vector<std::uint32_t> col_idx;

  std::size_t nnz() const noexcept { return col_idx.size(); }

  static MaskCoords from_mask(std::span<const std::int32_t> mask,
                              std::size_t rows, std::size_t cols);
};

namespace kernels {

/// sum_k a[k] * b[k] in double, fixed lane order.
double dot(const float *a, const float *b, std::size_t k);

/// out(M x N) = a(M x K) * b(K x N), row-major, overwrites out.
void gemm(const float *a, const float *b, std::size_t m, std::size_t k,
          std::size_t n, double *out);

/// out(M x N) = a(M x K) * bt(N x K)^T, overwrites out.
void gemm_nt(const float *a, const float *bt, std::size_t m, std::size_t n,
             std::size_t k, double *out);

/// out[i, j] = dot(a row i, bt row j) for every mask=1 coordinate; other
/// entries of out are left untouched.
void sddmm(const float *a, const float *bt, std::size_t k,
           const MaskCoords &coords, double *out);

} // namespace kernels

/// Dense product of a (M x K) and b (K x N). Adds M*N*K to counter->dense.
Tensor gemm(const Tensor &a, const Tensor &b, MacCounter *counter = nullptr);

/// GateMask-shaped sample pattern plus operands for one SDDMM call. The
/// right operand is kept transposed (N x K) so each sampled dot product
/// reads two contiguous rows.
struct MaskedProductPlan {
  Tensor lhs;   // M x K
  Tensor rhs_t; // N x K
  IntTensor mask; // M x N, values in {0, 1}
  MaskCoords coords;

  std::size_t nnz() const noexcept { return coords.nnz(); }

  /// `rhs` is K x N.
  static MaskedProductPlan make(Tensor lhs, const Tensor &rhs, IntTensor mask);
  static MaskedProductPlan make_transposed(Tensor lhs, Tensor rhs_t,
                                           IntTensor mask);
};

/// M x N result, zero where mask=0. Adds nnz*K to counter->sampled.
Tensor sddmm(const MaskedProductPlan &plan, MacCounter *counter = nullptr);

Tensor transpose2d(const Tensor &a);

struct ConvGeometry {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  /// Throws std::invalid_argument on degenerate geometry.
  void validate() const;
  std::size_t out_h() const { return (height + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (width + 2 * pad - kernel_w) / stride + 1; }
  std::size_t patch_size() const { return channels * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h() * out_w(); }
};

/// Patch rows of a single C x H x W image: rows[p, (c, i, j)], P x K.
void im2row(const float *image, const ConvGeometry &g, float *rows);

/// Adjoint of im2row: scatters P x K patch gradients back onto an image.
/// `image` is accumulated into, not overwritten.
void row2im_add(const float *rows, const ConvGeometry &g, float *image);

/// Patch matrix of an NCHW batch: (C*kh*kw) x (N*OH*OW). Column n*P + p
/// holds patch p of image n.
Tensor im2col(const Tensor &input, std::size_t kernel_h, std::size_t kernel_w,
              std::size_t stride, std::size_t pad);

/// NCHW convolution of `input` with weights (Cout, Cin, kh, kw), lowered to
/// im2col + gemm. Returns (N, Cout, OH, OW).
Tensor conv2d(const Tensor &input, const Tensor &weight, std::size_t stride,
              std::size_t pad, MacCounter *counter = nullptr);

} // namespace pg

#endif // PG_KERNELS_HPP
