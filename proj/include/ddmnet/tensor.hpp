#pragma once

// Dense f64 tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a graph node. Nodes produced by an
// operation whose inputs require gradients remember their inputs and a
// backward closure; backward() walks that graph once in reverse
// topological order. Graphs are per-handle, so independent model
// instances can run on different threads without shared state.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ddmnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Extent along `axis`; negative axes count from the back.
  std::size_t dim(int axis) const;

  std::span<const double> values() const;
  // Writable storage. Only meaningful on leaves (optimizer updates,
  // finite-difference probes); mutating a recorded intermediate does not
  // re-run anything.
  std::span<double> mutable_values();

  bool requires_grad() const;
  bool has_grad() const;
  // Empty span when no gradient has been materialized.
  std::span<const double> grad() const;
  void zero_grad();

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  // Same values, no graph history, no gradient.
  Tensor detach() const;
  // Deep copy of values; keeps requires_grad for leaves.
  Tensor clone_leaf() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape, std::vector<double>, const std::vector<Tensor>&,
                        std::function<void(std::span<const double>)>);
};

// While alive, operations on this thread record no graph (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Records a primitive. `backward` receives the output gradient and pushes
// contributions into inputs through grad_sink(). When no input requires a
// gradient the closure is dropped and the result is a plain constant.
Tensor make_op(Shape shape, std::vector<double> values,
               const std::vector<Tensor>& inputs,
               std::function<void(std::span<const double>)> backward);

// Gradient accumulator of `t`, materialized as zeros on first use. Returns
// an empty span when `t` does not require a gradient.
std::span<double> grad_sink(const Tensor& t);

// Reverse pass from a scalar root. Leaf gradients accumulate additively;
// intermediate nodes release their saved state afterwards.
void backward(const Tensor& root);

// ---- elementwise (numpy-style broadcasting) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
// Derivative at exactly zero is taken as 0.
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);
// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);
// Gradient flows to the first maximal element.
Tensor max(const Tensor& x, int axis, bool keepdim = false);

// ---- shape ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor index_select(const Tensor& x, int axis, const std::vector<std::size_t>& indices);
Tensor broadcast_to(const Tensor& x, const Shape& shape);

// ---- linear algebra / normalization ----
// a[..., i, k] x b[..., k, j]; batch extents broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x, int axis);
// Normalizes over the last axis, then applies gain/bias of that extent.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// ---- convolution (cross-correlation, zero padding) ----
// x: [Cin, T] or [N, Cin, T]; kernel: [Cout, Cin, K]; bias: [Cout] or undefined.
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              std::size_t dilation, std::size_t padding);
// x: [N, Cin, H, W] or [Cin, H, W]; kernel: [Cout, Cin, KH, KW].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              std::size_t dilation, std::size_t padding);
// Padding that keeps the extent for an odd kernel.
std::size_t same_padding(std::size_t kernel, std::size_t dilation);
// Non-overlapping 2x2 mean pooling over the last two axes; odd edges are dropped.
Tensor avg_pool2x2(const Tensor& x);

}  // namespace ddmnet
