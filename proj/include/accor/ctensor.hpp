#pragma once

// Complex-valued tensors with reverse-mode differentiation.
//
// Every value is stored as std::complex<double>. Gradients follow the
// split-real convention: the gradient buffer of a tensor holds
// dL/dRe(x) + j dL/dIm(x) for a real scalar loss L. With this packing the
// adjoint of y = w * x is g_x = conj(w) * g_y and g_w = conj(x) * g_y, which
// is what every backward rule below relies on.
//
// Tensors are shared handles. Results of operations are immutable; leaf
// tensors (parameters, inputs) may be edited in place through
// mutable_data(). A graph is recorded implicitly when at least one operand
// requires a gradient and recording is not disabled on the current thread.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace accor {

using Complex = std::complex<double>;
using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

class Tensor;
class GradSink;

/// Accumulates the gradients of an operation's operands given the gradient
/// of its output. Rules must add into the sink, never overwrite.
using BackwardRule = std::function<void(std::span<const Complex> grad_out, GradSink& sink)>;

namespace detail {

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<Complex> data;
  std::vector<Complex> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> producer;
};

struct Node {
  std::string name;
  std::vector<std::shared_ptr<TensorImpl>> operands;
  BackwardRule rule;
};

inline thread_local bool grad_recording = true;

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_recording) { detail::grad_recording = false; }
  ~NoGradGuard() { detail::grad_recording = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : Tensor(shape, std::vector<Complex>(shape_numel(shape))) {}

  Tensor(Shape shape, std::vector<Complex> data) : impl_(std::make_shared<detail::TensorImpl>()) {
    if (data.size() != shape_numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                       shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, Complex value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<Complex>(n, value));
  }

  static Tensor scalar(Complex value) { return Tensor(Shape{}, {value}); }

  static Tensor from_real(Shape shape, std::span<const double> values) {
    std::vector<Complex> data(values.begin(), values.end());
    return Tensor(std::move(shape), std::move(data));
  }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const { return impl().data.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= rank()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return shape()[axis];
  }

  std::span<const Complex> data() const { return impl().data; }

  /// In-place access for leaf tensors only; operation results are immutable.
  std::span<Complex> mutable_data() {
    if (impl().producer) throw UsageError("mutable_data() on a recorded operation result");
    return impl_->data;
  }

  Complex operator[](std::size_t flat) const { return impl().data.at(flat); }

  Complex at(std::span<const std::size_t> index) const { return impl().data[offset(index)]; }
  Complex at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }

  Complex item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return impl().data[0];
  }

  bool requires_grad() const { return impl().requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    if (impl().producer) throw UsageError("requires_grad can only be set on leaf tensors");
    impl_->requires_grad = on;
    return *this;
  }
  bool is_leaf() const { return !impl().producer; }

  /// dL/dRe + j dL/dIm accumulated by backward(); empty before the first pass.
  std::span<const Complex> grad() const { return impl().grad; }
  void zero_grad() { impl_->grad.assign(impl_->grad.size(), Complex{}); }

  /// Copy of the values with no link to the recorded graph.
  Tensor detach() const { return Tensor(shape(), impl().data); }

  std::size_t offset(std::span<const std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw ShapeError("index rank mismatch for shape " + shape_str(s));
    std::size_t flat = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (index[i] >= s[i]) throw ShapeError("index out of bounds for shape " + shape_str(s));
      flat = flat * s[i] + index[i];
    }
    return flat;
  }

  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  const detail::TensorImpl& impl() const {
    if (!impl_) throw UsageError("use of an undefined tensor");
    return *impl_;
  }

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Gradient buffers of an operation's operands during backward.
class GradSink {
 public:
  GradSink(const detail::Node& node,
           std::unordered_map<const detail::TensorImpl*, std::vector<Complex>>& scratch)
      : node_(node), scratch_(scratch) {}

  bool wants(std::size_t operand) const { return node_.operands.at(operand)->requires_grad; }

  /// Gradient buffer for the operand, zero-initialised on first use. Empty
  /// when the operand does not take part in differentiation.
  std::span<Complex> operator[](std::size_t operand) {
    auto& impl = *node_.operands.at(operand);
    if (!impl.requires_grad) return {};
    auto& buffer = impl.producer ? scratch_[&impl] : impl.grad;
    if (buffer.size() != impl.data.size()) buffer.assign(impl.data.size(), Complex{});
    return buffer;
  }

 private:
  const detail::Node& node_;
  std::unordered_map<const detail::TensorImpl*, std::vector<Complex>>& scratch_;
};

/// Records an operation result. When recording is disabled or no operand
/// requires a gradient the result is a plain constant and `rule` is dropped.
inline Tensor custom_op(std::string_view name, Shape shape, std::vector<Complex> values,
                        const std::vector<Tensor>& operands, BackwardRule rule) {
  Tensor out(std::move(shape), std::move(values));
  const bool any = std::any_of(operands.begin(), operands.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any || !detail::grad_recording) return out;
  auto node = std::make_shared<detail::Node>();
  node->name = std::string(name);
  for (const auto& t : operands) {
    node->operands.push_back(t.defined() ? t.impl_ptr() : std::make_shared<detail::TensorImpl>());
  }
  node->rule = std::move(rule);
  out.impl_ptr()->requires_grad = true;
  out.impl_ptr()->producer = std::move(node);
  return out;
}

/// Topologically ordered view of the operations a tensor depends on.
class GradRecord {
 public:
  struct Entry {
    const detail::TensorImpl* result;
    std::string name;
    /// Position of each operand in the record, or -1 for leaves.
    std::vector<std::ptrdiff_t> operand_positions;
  };

  explicit GradRecord(const Tensor& root) {
    std::unordered_map<const detail::TensorImpl*, std::ptrdiff_t> position;
    // Iterative post-order DFS; operands are visited in declaration order so
    // the sequence is deterministic.
    struct Frame {
      const detail::TensorImpl* impl;
      std::size_t next;
    };
    std::vector<Frame> stack;
    std::unordered_map<const detail::TensorImpl*, bool> visited;
    if (root.impl_ptr()->producer) stack.push_back({root.impl_ptr().get(), 0});
    visited[root.impl_ptr().get()] = true;
    while (!stack.empty()) {
      auto& top = stack.back();
      const auto& operands = top.impl->producer->operands;
      if (top.next < operands.size()) {
        const auto* child = operands[top.next++].get();
        if (child->producer && child->requires_grad && !visited[child]) {
          visited[child] = true;
          stack.push_back({child, 0});
        }
        continue;
      }
      Entry entry{top.impl, top.impl->producer->name, {}};
      for (const auto& op : operands) {
        auto it = position.find(op.get());
        entry.operand_positions.push_back(it == position.end() ? -1 : it->second);
      }
      position[top.impl] = static_cast<std::ptrdiff_t>(entries_.size());
      entries_.push_back(std::move(entry));
      stack.pop_back();
    }
  }

  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_.at(i); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
};

/// Reverse pass from a real scalar. Leaf gradients accumulate across calls.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw UsageError("backward() needs a scalar, got shape " + shape_str(loss.shape()));
  if (loss.item().imag() != 0.0) throw UsageError("backward() needs a real-valued loss (imaginary part is nonzero)");
  if (!loss.requires_grad()) return;
  const auto& root = loss.impl_ptr();
  if (!root->producer) {
    if (root->grad.size() != 1) root->grad.assign(1, Complex{});
    root->grad[0] += 1.0;
    return;
  }
  GradRecord record(loss);
  std::unordered_map<const detail::TensorImpl*, std::vector<Complex>> scratch;
  scratch[root.get()] = {Complex{1.0, 0.0}};
  for (auto it = record.end(); it != record.begin();) {
    --it;
    auto found = scratch.find(it->result);
    if (found == scratch.end()) continue;
    const auto grad_out = std::move(found->second);
    scratch.erase(found);
    GradSink sink(*it->result->producer, scratch);
    it->result->producer->rule(grad_out, sink);
  }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

enum class ElementwiseOp { add, sub, mul };

/// a ∘ b for identical shapes, or with either side a single-element tensor.
inline Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw ShapeError("elementwise shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const Shape out_shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  const auto av = a.data();
  const auto bv = b.data();
  auto ai = [&](std::size_t i) { return a_scalar ? av[0] : av[i]; };
  auto bi = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
  std::vector<Complex> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (op) {
      case ElementwiseOp::add: out[i] = ai(i) + bi(i); break;
      case ElementwiseOp::sub: out[i] = ai(i) - bi(i); break;
      case ElementwiseOp::mul: out[i] = ai(i) * bi(i); break;
    }
  }
  static constexpr const char* names[] = {"add", "sub", "mul"};
  return custom_op(names[static_cast<int>(op)], out_shape, std::move(out), {a, b},
                   [op, a, b, a_scalar, b_scalar, n](std::span<const Complex> g, GradSink& sink) {
                     const auto av = a.data();
                     const auto bv = b.data();
                     if (auto ga = sink[0]; !ga.empty()) {
                       for (std::size_t i = 0; i < n; ++i) {
                         Complex d = g[i];
                         if (op == ElementwiseOp::mul) d *= std::conj(b_scalar ? bv[0] : bv[i]);
                         ga[a_scalar ? 0 : i] += d;
                       }
                     }
                     if (auto gb = sink[1]; !gb.empty()) {
                       for (std::size_t i = 0; i < n; ++i) {
                         Complex d = g[i];
                         if (op == ElementwiseOp::sub) d = -d;
                         if (op == ElementwiseOp::mul) d *= std::conj(a_scalar ? av[0] : av[i]);
                         gb[b_scalar ? 0 : i] += d;
                       }
                     }
                   });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::add, a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::sub, a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::mul, a, b); }

/// Multiplies by a real constant.
inline Tensor scale(const Tensor& x, double factor) {
  std::vector<Complex> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return custom_op("scale", x.shape(), std::move(out), {x}, [factor](std::span<const Complex> g, GradSink& sink) {
    auto gx = sink[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

/// Keeps the real part; the imaginary part of the result is zero.
inline Tensor real_part(const Tensor& x) {
  std::vector<Complex> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i].real();
  return custom_op("real_part", x.shape(), std::move(out), {x}, [](std::span<const Complex> g, GradSink& sink) {
    auto gx = sink[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i].real();
  });
}

inline Tensor sum(const Tensor& x) {
  Complex total{};
  for (auto v : x.data()) total += v;
  const auto n = x.numel();
  return custom_op("sum", {}, {total}, {x}, [n](std::span<const Complex> g, GradSink& sink) {
    auto gx = sink[0];
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
  });
}

/// Mean over one axis; the axis is removed from the shape.
inline Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw ShapeError("mean_axis: axis out of range for " + shape_str(s));
  const std::size_t extent = s[axis];
  if (extent == 0) throw ShapeError("mean_axis over an empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<Complex> out(outer * inner);
  const auto xv = x.data();
  const double inv = 1.0 / static_cast<double>(extent);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * extent + e) * inner + i];
  for (auto& v : out) v *= inv;
  return custom_op("mean_axis", out_shape, std::move(out), {x},
                   [outer, extent, inner, inv](std::span<const Complex> g, GradSink& sink) {
                     auto gx = sink[0];
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t e = 0; e < extent; ++e)
                         for (std::size_t i = 0; i < inner; ++i) gx[(o * extent + e) * inner + i] += g[o * inner + i] * inv;
                   });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<Complex> out(x.data().begin(), x.data().end());
  return custom_op("reshape", std::move(shape), std::move(out), {x}, [](std::span<const Complex> g, GradSink& sink) {
    auto gx = sink[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// Reorders axes: result axis i is input axis `axes[i]`.
inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& s = x.shape();
  if (axes.size() != s.size()) throw ShapeError("permute: axis count mismatch for " + shape_str(s));
  std::vector<bool> seen(s.size());
  for (auto a : axes) {
    if (a >= s.size() || seen[a]) throw ShapeError("permute: invalid axis list");
    seen[a] = true;
  }
  std::vector<std::size_t> in_stride(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[axes[i]];
  const std::size_t n = x.numel();
  // source[i] = flat input offset feeding output element i
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> idx(s.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < s.size(); ++d) off += idx[d] * in_stride[axes[d]];
    source[flat] = off;
    for (std::size_t d = s.size(); d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  std::vector<Complex> out(n);
  const auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[source[i]];
  return custom_op("permute", out_shape, std::move(out), {x},
                   [source = std::move(source)](std::span<const Complex> g, GradSink& sink) {
                     auto gx = sink[0];
                     for (std::size_t i = 0; i < g.size(); ++i) gx[source[i]] += g[i];
                   });
}

/// Swaps the last two axes.
inline Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose needs rank >= 2");
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(x, axes);
}

// ---------------------------------------------------------------------------
// Matrix products

namespace detail {
using RowMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

inline ConstMatrixMap cmap(std::span<const Complex> v, std::size_t rows, std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
inline MatrixMap map(std::span<Complex> v, std::size_t rows, std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
}  // namespace detail

/// Batched product (B, M, K) x (B, K, N) -> (B, M, N).
inline Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("bmm shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<Complex> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    detail::map(std::span(out).subspan(i * m * n, m * n), m, n).noalias() =
        detail::cmap(a.data().subspan(i * m * k, m * k), m, k) * detail::cmap(b.data().subspan(i * k * n, k * n), k, n);
  }
  return custom_op("bmm", {batch, m, n}, std::move(out), {a, b},
                   [a, b, batch, m, k, n](std::span<const Complex> g, GradSink& sink) {
                     auto ga = sink[0];
                     auto gb = sink[1];
                     for (std::size_t i = 0; i < batch; ++i) {
                       const auto gm = detail::cmap(g.subspan(i * m * n, m * n), m, n);
                       if (!ga.empty()) {
                         detail::map(ga.subspan(i * m * k, m * k), m, k).noalias() +=
                             gm * detail::cmap(b.data().subspan(i * k * n, k * n), k, n).adjoint();
                       }
                       if (!gb.empty()) {
                         detail::map(gb.subspan(i * k * n, k * n), k, n).noalias() +=
                             detail::cmap(a.data().subspan(i * m * k, m * k), m, k).adjoint() * gm;
                       }
                     }
                   });
}

/// Rank-2 complex matrix product.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), n = b.dim(1);
  return reshape(bmm(reshape(a, {1, m, a.dim(1)}), reshape(b, {1, b.dim(0), n})), {m, n});
}

}  // namespace accor
