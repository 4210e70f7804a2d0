#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <functional>
#include <vector>

#include "ddmnet/tensor.hpp"

namespace ddmnet::detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(std::span<const double>)> backward;
};

// A tensor seen as [outer, extent, inner] around one axis.
struct AxisView {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

std::size_t normalize_axis(int axis, std::size_t rank);
Shape broadcast_shapes(const Shape& a, const Shape& b);
// For every element of `out`, the flat index of the element of `in` it reads.
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out);
AxisView axis_view(const Shape& shape, std::size_t axis);

}  // namespace ddmnet::detail
