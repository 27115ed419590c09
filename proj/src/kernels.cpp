// SPDX-License-Identifier: Apache-2.0
#include "pg/kernels.hpp"

#include "pg/parallel.hpp"

#include <algorithm>
#include <stdexcept>

namespace pg {

MaskCoords MaskCoords::from_mask(std::span<const std::int32_t> mask,
                                 std::size_t rows, std::size_t cols) {
  if (mask.size() != rows * cols)
    throw ShapeError("mask of " + std::to_string(mask.size()) +
                     " entries does not cover a " + std::to_string(rows) +
                     "x" + std::to_string(cols) + " product");
  MaskCoords c;
  c.rows = rows;
  c.cols = cols;
  c.row_ptr.resize(rows + 1, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j)
      if (mask[i * cols + j])
        c.col_idx.push_back(static_cast<std::uint32_t>(j));
    c.row_ptr[i + 1] = static_cast<std::uint32_t>(c.col_idx.size());
  }
  return c;
}

namespace kernels {

double dot(const float *a, const float *b, std::size_t k) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < k; ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

void gemm(const float *a, const float *b, std::size_t m, std::size_t k,
          std::size_t n, double *out) {
  constexpr std::size_t kBlock = 128;
  parallel_for(m, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i)
      std::fill(out + i * n, out + (i + 1) * n, 0.0);
    // Column blocking keeps the accumulator row in L1 for wide outputs.
    for (std::size_t j0 = 0; j0 < n; j0 += kBlock) {
      const std::size_t j1 = std::min(n, j0 + kBlock);
      for (std::size_t i = r0; i < r1; ++i) {
        double *acc = out + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          const float *brow = b + p * n;
#pragma omp simd
          for (std::size_t j = j0; j < j1; ++j)
            acc[j] += av * static_cast<double>(brow[j]);
        }
      }
    }
  });
}

namespace {

// Four dot products against one shared lhs row.
inline void dot4(const float *a, const float *b0, const float *b1,
                 const float *b2, const float *b3, std::size_t k, double *o0,
                 double *o1, double *o2, double *o3) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p];
    s0 += av * static_cast<double>(b0[p]);
    s1 += av * static_cast<double>(b1[p]);
    s2 += av * static_cast<double>(b2[p]);
    s3 += av * static_cast<double>(b3[p]);
  }
  *o0 = s0;
  *o1 = s1;
  *o2 = s2;
  *o3 = s3;
}

} // namespace

void gemm_nt(const float *a, const float *bt, std::size_t m, std::size_t n,
             std::size_t k, double *out) {
  parallel_for(m, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const float *arow = a + i * k;
      double *orow = out + i * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        const float *b0 = bt + j * k;
        dot4(arow, b0, b0 + k, b0 + 2 * k, b0 + 3 * k, k, orow + j,
             orow + j + 1, orow + j + 2, orow + j + 3);
      }
      for (; j < n; ++j)
        orow[j] = dot(arow, bt + j * k, k);
    }
  });
}

void sddmm(const float *a, const float *bt, std::size_t k,
           const MaskCoords &coords, double *out) {
  const std::size_t n = coords.cols;
  parallel_for(coords.rows, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const float *arow = a + i * k;
      double *orow = out + i * n;
      const std::uint32_t *col = coords.col_idx.data();
      std::uint32_t e = coords.row_ptr[i];
      const std::uint32_t end = coords.row_ptr[i + 1];
      for (; e + 4 <= end; e += 4)
        dot4(arow, bt + col[e] * k, bt + col[e + 1] * k, bt + col[e + 2] * k,
             bt + col[e + 3] * k, k, orow + col[e], orow + col[e + 1],
             orow + col[e + 2], orow + col[e + 3]);
      for (; e < end; ++e)
        orow[col[e]] = dot(arow, bt + col[e] * k, k);
    }
  });
}

} // namespace kernels

namespace {

void require_matrix(const Tensor &t, const char *what) {
  if (t.rank() != 2)
    throw ShapeError(std::string(what) + " must be a matrix, got " +
                     shape_string(t.shape()));
}

Tensor to_float(const std::vector<double> &v, Shape shape) {
  std::vector<float> f(v.begin(), v.end());
  return Tensor(std::move(shape), std::move(f));
}

} // namespace

Tensor gemm(const Tensor &a, const Tensor &b, MacCounter *counter) {
  require_matrix(a, "gemm lhs");
  require_matrix(b, "gemm rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("gemm inner dimensions differ: " +
                     shape_string(a.shape()) + " x " + shape_string(b.shape()));
  std::vector<double> out(m * n);
  kernels::gemm(a.data().data(), b.data().data(), m, k, n, out.data());
  if (counter)
    counter->dense += m * n * k;
  return to_float(out, {m, n});
}

Tensor transpose2d(const Tensor &a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      t[j * r + i] = a[i * c + j];
  return t;
}

MaskedProductPlan MaskedProductPlan::make(Tensor lhs, const Tensor &rhs,
                                          IntTensor mask) {
  require_matrix(rhs, "sddmm rhs");
  return make_transposed(std::move(lhs), transpose2d(rhs), std::move(mask));
}

MaskedProductPlan MaskedProductPlan::make_transposed(Tensor lhs, Tensor rhs_t,
                                                     IntTensor mask) {
  require_matrix(lhs, "sddmm lhs");
  require_matrix(rhs_t, "sddmm rhs");
  if (lhs.dim(1) != rhs_t.dim(1))
    throw ShapeError("sddmm inner dimensions differ: lhs " +
                     shape_string(lhs.shape()) + ", rhs^T " +
                     shape_string(rhs_t.shape()));
  const Shape out_shape{lhs.dim(0), rhs_t.dim(0)};
  if (mask.shape() != out_shape)
    throw ShapeError("sddmm mask shape " + shape_string(mask.shape()) +
                     " does not match product shape " +
                     shape_string(out_shape));
  for (std::int32_t v : mask.data())
    if (v != 0 && v != 1)
      throw std::invalid_argument("sddmm mask must be binary");
  MaskedProductPlan plan{std::move(lhs), std::move(rhs_t), std::move(mask), {}};
  plan.coords =
      MaskCoords::from_mask(plan.mask.data(), out_shape[0], out_shape[1]);
  return plan;
}

Tensor sddmm(const MaskedProductPlan &plan, MacCounter *counter) {
  const std::size_t m = plan.lhs.dim(0), k = plan.lhs.dim(1),
                    n = plan.rhs_t.dim(0);
  std::vector<double> out(m * n, 0.0);
  kernels::sddmm(plan.lhs.data().data(), plan.rhs_t.data().data(), k,
                 plan.coords, out.data());
  if (counter)
    counter->sampled += plan.nnz() * k;
  return to_float(out, {m, n});
}

void ConvGeometry::validate() const {
  if (channels == 0 || height == 0 || width == 0 || kernel_h == 0 ||
      kernel_w == 0 || stride == 0)
    throw std::invalid_argument("convolution geometry has a zero extent");
  if (height + 2 * pad < kernel_h || width + 2 * pad < kernel_w)
    throw std::invalid_argument(
        "kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
        " larger than padded input " + std::to_string(height + 2 * pad) + "x" +
        std::to_string(width + 2 * pad));
}

void im2row(const float *image, const ConvGeometry &g, float *rows) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.patch_size();
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      float *row = rows + (y * ow + x) * k;
      const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(x * g.stride) -
                                static_cast<std::ptrdiff_t>(g.pad);
      const bool x_inside = x0 >= 0 && x0 + static_cast<std::ptrdiff_t>(g.kernel_w) <= w;
      for (std::size_t c = 0; c < g.channels; ++c) {
        const float *plane = image + c * g.height * g.width;
        for (std::size_t i = 0; i < g.kernel_h; ++i, row += g.kernel_w) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= h) {
            std::fill(row, row + g.kernel_w, 0.0f);
          } else if (x_inside) {
            std::copy_n(plane + iy * w + x0, g.kernel_w, row);
          } else {
            for (std::size_t j = 0; j < g.kernel_w; ++j) {
              const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(j);
              row[j] = ix >= 0 && ix < w ? plane[iy * w + ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void row2im_add(const float *rows, const ConvGeometry &g, float *image) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.patch_size();
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const float *row = rows + (y * ow + x) * k;
      std::size_t idx = 0;
      for (std::size_t c = 0; c < g.channels; ++c) {
        float *plane = image + c * g.height * g.width;
        for (std::size_t i = 0; i < g.kernel_h; ++i) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t j = 0; j < g.kernel_w; ++j, ++idx) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(x * g.stride + j) -
                static_cast<std::ptrdiff_t>(g.pad);
            if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                ix < static_cast<std::ptrdiff_t>(g.width))
              plane[iy * g.width + ix] += row[idx];
          }
        }
      }
    }
  }
}

namespace {

ConvGeometry geometry_of(const Tensor &input, std::size_t kh, std::size_t kw,
                         std::size_t stride, std::size_t pad) {
  if (input.rank() != 4)
    throw ShapeError("convolution input must be NCHW, got " +
                     shape_string(input.shape()));
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), kh, kw, stride, pad};
  g.validate();
  return g;
}

} // namespace

Tensor im2col(const Tensor &input, std::size_t kernel_h, std::size_t kernel_w,
              std::size_t stride, std::size_t pad) {
  const ConvGeometry g = geometry_of(input, kernel_h, kernel_w, stride, pad);
  const std::size_t batch = input.dim(0), p = g.positions(), k = g.patch_size();
  const std::size_t image_size = g.channels * g.height * g.width;
  Tensor cols({k, batch * p});
  std::vector<float> rows(p * k);
  for (std::size_t n = 0; n < batch; ++n) {
    im2row(input.data().data() + n * image_size, g, rows.data());
    for (std::size_t q = 0; q < p; ++q)
      for (std::size_t r = 0; r < k; ++r)
        cols[r * batch * p + n * p + q] = rows[q * k + r];
  }
  return cols;
}

Tensor conv2d(const Tensor &input, const Tensor &weight, std::size_t stride,
              std::size_t pad, MacCounter *counter) {
  if (weight.rank() != 4)
    throw ShapeError("convolution weight must be (Cout, Cin, kh, kw), got " +
                     shape_string(weight.shape()));
  const ConvGeometry g =
      geometry_of(input, weight.dim(2), weight.dim(3), stride, pad);
  if (weight.dim(1) != g.channels)
    throw ShapeError("convolution weight " + shape_string(weight.shape()) +
                     " does not match input " + shape_string(input.shape()));
  const std::size_t batch = input.dim(0), cout = weight.dim(0),
                    p = g.positions(), k = g.patch_size();
  const Tensor cols = im2col(input, g.kernel_h, g.kernel_w, stride, pad);
  const Tensor wmat = weight.reshaped({cout, k});
  const Tensor prod = gemm(wmat, cols, counter);
  Tensor out({batch, cout, g.out_h(), g.out_w()});
  for (std::size_t c = 0; c < cout; ++c)
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t q = 0; q < p; ++q)
        out[(n * cout + c) * p + q] = prod[c * batch * p + n * p + q];
  return out;
}

} // namespace pg
