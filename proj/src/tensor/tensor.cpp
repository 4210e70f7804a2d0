#include "ddmnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "ddmnet/errors.hpp"
#include "tensor_internal.hpp"

namespace ddmnet {

namespace detail {

thread_local int no_grad_depth = 0;

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  std::vector<std::size_t> in_strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = rank; i-- > offset;) {
    const std::size_t extent = in[i - offset];
    in_strides[i] = extent == 1 ? 0 : stride;
    stride *= extent;
  }
  const std::size_t total = shape_numel(out);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t k = 0; k < total; ++k) {
    map[k] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      src += in_strides[d];
      if (counter[d] < out[d]) break;
      src -= in_strides[d] * counter[d];
      counter[d] = 0;
    }
  }
  return map;
}

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  v.outer = 1;
  v.inner = 1;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

}  // namespace detail

using detail::Node;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() { ++detail::no_grad_depth; }
NoGradGuard::~NoGradGuard() { --detail::no_grad_depth; }

Tensor::Tensor() = default;

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::dim(int axis) const {
  return node_->shape[detail::normalize_axis(axis, node_->shape.size())];
}

std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  std::size_t d = 0;
  for (std::size_t i : index) {
    if (i >= s[d]) throw DimensionError("index out of range for " + shape_str(s));
    flat = flat * s[d] + i;
    ++d;
  }
  return node_->value[flat];
}

Tensor Tensor::detach() const { return from(shape(), node_->value); }

Tensor Tensor::clone_leaf() const {
  Tensor t = from(shape(), node_->value);
  t.node_->requires_grad = node_->requires_grad && node_->parents.empty();
  return t;
}

Tensor make_op(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
               std::function<void(std::span<const double>)> backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (detail::no_grad_depth > 0) return out;
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  Node& node = *out.node_;
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) node.parents.push_back(t.node());
  }
  node.backward = std::move(backward);
  return out;
}

std::span<double> grad_sink(const Tensor& t) {
  if (!t.requires_grad()) return {};
  Node& node = *t.node();
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ContractError("backward() needs a scalar root, got " +
                        (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  }
  if (!root.requires_grad()) {
    throw ContractError("backward() root is not connected to any parameter");
  }

  // Post-order DFS: every input precedes its consumers.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  grad_sink(root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(node->grad);
  }
  for (Node* node : order) {
    if (!node->parents.empty() || node->backward) {
      node->parents.clear();
      node->backward = nullptr;
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  const Shape out_shape = detail::broadcast_shapes(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  const bool same_a = a.shape() == out_shape;
  const bool same_b = b.shape() == out_shape;
  std::vector<std::size_t> ia = same_a ? std::vector<std::size_t>{} : detail::broadcast_index(a.shape(), out_shape);
  std::vector<std::size_t> ib = same_b ? std::vector<std::size_t>{} : detail::broadcast_index(b.shape(), out_shape);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = f(av[same_a ? k : ia[k]], bv[same_b ? k : ib[k]]);
  }
  return make_op(out_shape, std::move(out), {a, b},
                 [a, b, ia = std::move(ia), ib = std::move(ib), same_a, same_b, dfa, dfb,
                  n](std::span<const double> g) {
                   auto av = a.values();
                   auto bv = b.values();
                   auto ga = grad_sink(a);
                   auto gb = grad_sink(b);
                   for (std::size_t k = 0; k < n; ++k) {
                     const std::size_t ka = same_a ? k : ia[k];
                     const std::size_t kb = same_b ? k : ib[k];
                     if (!ga.empty()) ga[ka] += g[k] * dfa(av[ka], bv[kb]);
                     if (!gb.empty()) gb[kb] += g[k] * dfb(av[ka], bv[kb]);
                   }
                 });
}

// `df` receives (input, output).
template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t k = 0; k < xv.size(); ++k) out[k] = f(xv[k]);
  Tensor result = make_op(x.shape(), std::move(out), {x}, nullptr);
  if (!result.requires_grad()) return result;
  // Re-record with access to the output values.
  std::weak_ptr<detail::Node> self = result.node();
  result.node()->backward = [x, df, self](std::span<const double> g) {
    auto out_node = self.lock();
    auto xv = x.values();
    auto gx = grad_sink(x);
    for (std::size_t k = 0; k < xv.size(); ++k) gx[k] += g[k] * df(xv[k], out_node->value[k]);
  };
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v >= 0.0)) throw NumericError("sqrt of negative or non-finite value");
  }
  return unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
  }
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_op({1}, {total}, {x}, [x](std::span<const double> g) {
    auto gx = grad_sink(x);
    for (double& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

namespace {

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out.empty()) out.push_back(1);
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank());
  const auto v = detail::axis_view(x.shape(), ax);
  auto xv = x.values();
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t e = 0; e < v.extent; ++e) {
      const double* src = xv.data() + (o * v.extent + e) * v.inner;
      double* dst = out.data() + o * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
    }
  }
  return make_op(reduced_shape(x.shape(), ax, keepdim), std::move(out), {x},
                 [x, v](std::span<const double> g) {
                   auto gx = grad_sink(x);
                   for (std::size_t o = 0; o < v.outer; ++o) {
                     for (std::size_t e = 0; e < v.extent; ++e) {
                       double* dst = gx.data() + (o * v.extent + e) * v.inner;
                       const double* src = g.data() + o * v.inner;
                       for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
                     }
                   }
                 });
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank());
  return scale(sum(x, axis, keepdim), 1.0 / static_cast<double>(x.shape()[ax]));
}

Tensor max(const Tensor& x, int axis, bool keepdim) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank());
  const auto v = detail::axis_view(x.shape(), ax);
  auto xv = x.values();
  std::vector<double> out(v.outer * v.inner);
  std::vector<std::size_t> arg(v.outer * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      std::size_t best = 0;
      double best_v = xv[o * v.extent * v.inner + i];
      for (std::size_t e = 1; e < v.extent; ++e) {
        const double c = xv[(o * v.extent + e) * v.inner + i];
        if (c > best_v) {
          best_v = c;
          best = e;
        }
      }
      out[o * v.inner + i] = best_v;
      arg[o * v.inner + i] = (o * v.extent + best) * v.inner + i;
    }
  }
  return make_op(reduced_shape(x.shape(), ax, keepdim), std::move(out), {x},
                 [x, arg = std::move(arg)](std::span<const double> g) {
                   auto gx = grad_sink(x);
                   for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k]] += g[k];
                 });
}

// ---------------------------------------------------------------------------
// shape

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> values(x.values().begin(), x.values().end());
  return make_op(std::move(shape), std::move(values), {x}, [x](std::span<const double> g) {
    auto gx = grad_sink(x);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  if (order.size() != rank) throw DimensionError("permute order rank mismatch for " + shape_str(in));
  std::vector<bool> used(rank, false);
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (order[d] >= rank || used[order[d]]) throw DimensionError("invalid permutation");
    used[order[d]] = true;
    out_shape[d] = in[order[d]];
  }
  std::vector<std::size_t> in_strides(rank);
  std::size_t stride = 1;
  for (std::size_t d = rank; d-- > 0;) {
    in_strides[d] = stride;
    stride *= in[d];
  }
  const std::size_t n = x.numel();
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    src[k] = pos;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      pos += in_strides[order[d]];
      if (counter[d] < out_shape[d]) break;
      pos -= in_strides[order[d]] * counter[d];
      counter[d] = 0;
    }
  }
  auto xv = x.values();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = xv[src[k]];
  return make_op(std::move(out_shape), std::move(out), {x},
                 [x, src = std::move(src)](std::span<const double> g) {
                   auto gx = grad_sink(x);
                   for (std::size_t k = 0; k < src.size(); ++k) gx[src[k]] += g[k];
                 });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(x.shape()));
  std::vector<std::size_t> order(x.rank());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[x.rank() - 1], order[x.rank() - 2]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  const std::size_t ax = detail::normalize_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == ax || s[d] == first[d];
    if (!ok) throw DimensionError("concat shape mismatch: " + shape_str(first) + " vs " + shape_str(s));
    out_shape[ax] += s[ax];
  }
  const auto ov = detail::axis_view(out_shape, ax);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t block = p.shape()[ax] * ov.inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy_n(pv.data() + o * block, block, out.data() + o * ov.extent * ov.inner + offset * ov.inner);
    }
    offset += p.shape()[ax];
  }
  return make_op(out_shape, std::move(out), parts,
                 [parts, offsets, ov, ax](std::span<const double> g) {
                   for (std::size_t i = 0; i < parts.size(); ++i) {
                     auto gp = grad_sink(parts[i]);
                     if (gp.empty()) continue;
                     const std::size_t block = parts[i].shape()[ax] * ov.inner;
                     for (std::size_t o = 0; o < ov.outer; ++o) {
                       const double* src = g.data() + o * ov.extent * ov.inner + offsets[i] * ov.inner;
                       double* dst = gp.data() + o * block;
                       for (std::size_t k = 0; k < block; ++k) dst[k] += src[k];
                     }
                   }
                 });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank());
  if (begin >= end || end > x.shape()[ax]) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return index_select(x, axis, idx);
}

Tensor index_select(const Tensor& x, int axis, const std::vector<std::size_t>& indices) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank());
  if (indices.empty()) throw DimensionError("index_select with no indices");
  const auto v = detail::axis_view(x.shape(), ax);
  for (std::size_t i : indices) {
    if (i >= v.extent) throw DimensionError("index " + std::to_string(i) + " out of range for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = indices.size();
  auto xv = x.values();
  std::vector<double> out(v.outer * indices.size() * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t e = 0; e < indices.size(); ++e) {
      std::copy_n(xv.data() + (o * v.extent + indices[e]) * v.inner, v.inner,
                  out.data() + (o * indices.size() + e) * v.inner);
    }
  }
  return make_op(std::move(out_shape), std::move(out), {x},
                 [x, v, indices](std::span<const double> g) {
                   auto gx = grad_sink(x);
                   for (std::size_t o = 0; o < v.outer; ++o) {
                     for (std::size_t e = 0; e < indices.size(); ++e) {
                       const double* src = g.data() + (o * indices.size() + e) * v.inner;
                       double* dst = gx.data() + (o * v.extent + indices[e]) * v.inner;
                       for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
                     }
                   }
                 });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (detail::broadcast_shapes(x.shape(), shape) != shape) {
    throw DimensionError("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto map = detail::broadcast_index(x.shape(), shape);
  auto xv = x.values();
  std::vector<double> out(map.size());
  for (std::size_t k = 0; k < map.size(); ++k) out[k] = xv[map[k]];
  return make_op(shape, std::move(out), {x}, [x, map = std::move(map)](std::span<const double> g) {
    auto gx = grad_sink(x);
    for (std::size_t k = 0; k < map.size(); ++k) gx[map[k]] += g[k];
  });
}

}  // namespace ddmnet
