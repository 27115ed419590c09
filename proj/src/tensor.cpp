// SPDX-License-Identifier: Apache-2.0
#include "pg/tensor.hpp"

#include <algorithm>
#include <limits>
#include <type_traits>

namespace pg {

std::string shape_string(const Shape &shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_same_shape(const Shape &a, const Shape &b, const char *what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     shape_string(a) + " vs " + shape_string(b));
}

namespace {

template <typename T> T apply(BinaryOp op, T x, T y) {
  switch (op) {
  case BinaryOp::add:
    return x + y;
  case BinaryOp::sub:
    return x - y;
  case BinaryOp::mul:
    return x * y;
  case BinaryOp::div:
    if constexpr (std::is_integral_v<T>) {
      if (y == 0)
        throw std::domain_error("integer division by zero");
    }
    return x / y;
  case BinaryOp::max:
    return std::max(x, y);
  case BinaryOp::min:
    return std::min(x, y);
  }
  return T{};
}

template <typename T>
BasicTensor<T> elementwise_impl(BinaryOp op, const BasicTensor<T> &a,
                                const BasicTensor<T> &b) {
  check_same_shape(a.shape(), b.shape(), "elementwise");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out[i] = apply(op, a[i], b[i]);
  return out;
}

} // namespace

Tensor elementwise(BinaryOp op, const Tensor &a, const Tensor &b) {
  return elementwise_impl(op, a, b);
}

IntTensor elementwise(BinaryOp op, const IntTensor &a, const IntTensor &b) {
  return elementwise_impl(op, a, b);
}

Tensor elementwise_per_channel(BinaryOp op, const Tensor &a,
                               std::span<const float> v,
                               std::size_t channel_axis) {
  const std::size_t channels = a.dim(channel_axis);
  if (v.size() != channels)
    throw ShapeError("per-channel vector of length " +
                     std::to_string(v.size()) + " against axis " +
                     std::to_string(channel_axis) + " of " +
                     shape_string(a.shape()));
  std::size_t inner = 1;
  for (std::size_t d = channel_axis + 1; d < a.rank(); ++d)
    inner *= a.shape()[d];
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out[i] = apply(op, a[i], v[(i / inner) % channels]);
  return out;
}

Tensor reduce(ReduceOp op, const Tensor &a, std::size_t axis) {
  const std::size_t extent = a.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d)
    outer *= a.shape()[d];
  for (std::size_t d = axis + 1; d < a.rank(); ++d)
    inner *= a.shape()[d];

  Shape out_shape;
  for (std::size_t d = 0; d < a.rank(); ++d)
    if (d != axis)
      out_shape.push_back(a.shape()[d]);
  if (out_shape.empty())
    out_shape.push_back(1);

  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const float *base = a.data().data() + o * extent * inner + i;
      float acc = op == ReduceOp::max ? base[0] : 0.0f;
      for (std::size_t e = 0; e < extent; ++e) {
        const float x = base[e * inner];
        acc = op == ReduceOp::max ? std::max(acc, x) : acc + x;
      }
      if (op == ReduceOp::mean)
        acc /= static_cast<float>(extent);
      out[o * inner + i] = acc;
    }
  }
  return out;
}

float sum_all(const Tensor &a) {
  float acc = 0.0f;
  for (float x : a.data())
    acc += x;
  return acc;
}

float max_all(const Tensor &a) {
  float m = -std::numeric_limits<float>::infinity();
  for (float x : a.data())
    m = std::max(m, x);
  return m;
}

} // namespace pg
