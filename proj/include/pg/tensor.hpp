// SPDX-License-Identifier: Apache-2.0
/**
 * @file  tensor.hpp
 * @brief Dense row-major tensors shared by every module: a real-valued
 *        carrier for activations and weights, and an integer carrier for
 *        fixed-point codes.
 */
#ifndef PG_TENSOR_HPP
#define PG_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pg {

using Shape = std::vector<std::size_t>;

/// Raised whenever operands disagree on shape or an axis is out of range.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Shape &shape);
std::size_t shape_numel(const Shape &shape);

template <typename T> class BasicTensor {
public:
  using value_type = T;

  BasicTensor() : shape_{1}, data_(1, T{}) {}

  explicit BasicTensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_numel(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  const Shape &shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= shape_.size())
      throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                       shape_string(shape_));
    return shape_[axis];
  }
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T> &values() const noexcept { return data_; }

  T &operator[](std::size_t i) { return data_[i]; }
  const T &operator[](std::size_t i) const { return data_[i]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Same data, new shape with an equal element count.
  BasicTensor reshaped(Shape shape) const {
    return BasicTensor(std::move(shape), data_);
  }

  bool operator==(const BasicTensor &) const = default;

private:
  static void check_shape(const Shape &shape) {
    if (shape.empty())
      throw ShapeError("tensor shape must have at least one dimension");
    for (std::size_t d : shape)
      if (d == 0)
        throw ShapeError("tensor dimensions must be >= 1, got " +
                         shape_string(shape));
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using IntTensor = BasicTensor<std::int32_t>;

enum class BinaryOp { add, sub, mul, div, max, min };
enum class ReduceOp { sum, mean, max };

Tensor elementwise(BinaryOp op, const Tensor &a, const Tensor &b);
IntTensor elementwise(BinaryOp op, const IntTensor &a, const IntTensor &b);

/// Applies `op(a[i], v[c])` where c is the index of element i along
/// `channel_axis`. This is the only broadcast the engine supports.
Tensor elementwise_per_channel(BinaryOp op, const Tensor &a,
                               std::span<const float> v,
                               std::size_t channel_axis);

/// Reduction along one axis. The reduced axis is removed; reducing a rank-1
/// tensor yields shape {1}. Real sums accumulate in index order.
Tensor reduce(ReduceOp op, const Tensor &a, std::size_t axis);

/// Full reductions over all elements, in index order.
float sum_all(const Tensor &a);
float max_all(const Tensor &a);

void check_same_shape(const Shape &a, const Shape &b, const char *what);

} // namespace pg

#endif // PG_TENSOR_HPP
