#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "edgegat/error.hpp"

namespace edgegat {

/// Dense row-major matrix used as the storage of every tensor.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

namespace detail {

inline thread_local bool grad_enabled = true;

}  // namespace detail

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() noexcept { return detail::grad_enabled; }

template <typename T>
struct Node {
  Mat<T> value;
  Mat<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // reads `grad`, accumulates into parents

  bool leaf() const noexcept { return !backward; }

  /// grad += delta, allocating on first use.
  template <typename Expr>
  void accumulate(const Expr& delta) {
    if (grad.size() == 0) {
      grad = delta;
    } else {
      grad += delta;
    }
  }

  Mat<T>& grad_buffer() {
    if (grad.size() == 0) grad = Mat<T>::Zero(value.rows(), value.cols());
    return grad;
  }
};

/// A 2-D tensor participating in reverse-mode differentiation. Copies share the
/// same node, so a Tensor behaves like a handle.
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() : node_(std::make_shared<Node<T>>()) {}
  explicit Tensor(Mat<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return Tensor(Mat<T>::Zero(rows, cols), requires_grad);
  }
  static Tensor scalar(T v) {
    Mat<T> m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m));
  }
  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  Index rows() const noexcept { return node_->value.rows(); }
  Index cols() const noexcept { return node_->value.cols(); }
  std::string shape_string() const { return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]"; }

  const Mat<T>& value() const noexcept { return node_->value; }
  /// Direct access for optimizers and initializers; never use on graph interior nodes.
  Mat<T>& mutable_value() noexcept { return node_->value; }
  T item() const {
    if (rows() != 1 || cols() != 1) throw DomainError("item() on non-scalar tensor " + shape_string());
    return node_->value(0, 0);
  }

  bool requires_grad() const noexcept { return node_->requires_grad; }
  bool has_grad() const noexcept { return node_->grad.size() != 0; }
  /// Gradient, zero-filled if nothing has been accumulated yet.
  const Mat<T>& grad() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.resize(0, 0); }

  /// Same value, cut from the graph.
  Tensor detach() const { return Tensor(node_->value, false); }

  const NodePtr& node() const noexcept { return node_; }

 private:
  NodePtr node_;
};

/// Builds an op result. Records `backward` only when grad mode is on and some
/// input requires a gradient.
template <typename T, typename Fn>
Tensor<T> make_result(Mat<T> value, std::initializer_list<Tensor<T>> inputs, Fn&& backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->parents.push_back(in.node());
      node->backward = std::forward<Fn>(backward);
    }
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T, typename Fn>
Tensor<T> make_result(Mat<T> value, const std::vector<Tensor<T>>& inputs, Fn&& backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->parents.push_back(in.node());
      node->backward = std::forward<Fn>(backward);
    }
  }
  return Tensor<T>::from_node(std::move(node));
}

/// Reverse sweep from a scalar loss. Gradients accumulate into every reachable
/// leaf that requires one; interior gradients are released as soon as they are used.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw DomainError("backward() needs a scalar loss, got " + loss.shape_string());
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; parents are visited in recorded order so the
  // resulting topological order (and hence accumulation order) is deterministic.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node<T>* root = loss.node().get();
  root->accumulate(Mat<T>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->leaf()) continue;
    if (node->grad.size() != 0) node->backward(*node);
    node->grad.resize(0, 0);
  }
}

// ---------------------------------------------------------------------------
// Shape checks

namespace detail {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DomainError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

inline std::shared_ptr<const std::vector<std::uint32_t>> share_indices(std::span<const std::uint32_t> idx) {
  return std::make_shared<const std::vector<std::uint32_t>>(idx.begin(), idx.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) {
    throw DomainError("matmul: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
  Mat<T> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) pa->grad_buffer().noalias() += self.grad * pb->value.transpose();
    if (pb->requires_grad) pb->grad_buffer().noalias() += pa->value.transpose() * self.grad;
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  return make_result<T>(a.value().transpose(), {a}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad.transpose());
  });
}

// ---------------------------------------------------------------------------
// Element-wise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  return make_result<T>(a.value() + b.value(), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  return make_result<T>(a.value() - b.value(), {a, b}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(-self.grad);
  });
}

/// Hadamard product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  return make_result<T>(a.value().cwiseProduct(b.value()), {a, b}, [](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) pa->accumulate(self.grad.cwiseProduct(pb->value));
    if (pb->requires_grad) pb->accumulate(self.grad.cwiseProduct(pa->value));
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return make_result<T>(a.value() * s, {a}, [s](Node<T>& self) { self.parents[0]->accumulate(self.grad * s); });
}

/// a (m x n) + bias (1 x n) broadcast over rows. The only broadcasting op.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DomainError("add_bias: shape mismatch " + a.shape_string() + " vs " + bias.shape_string());
  }
  Mat<T> out = a.value();
  out.rowwise() += bias.value().row(0);
  return make_result<T>(std::move(out), {a, bias}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

/// a (m x n) with row i multiplied by s(i, 0); s is m x 1.
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.cols() != 1 || s.rows() != a.rows()) {
    throw DomainError("scale_rows: shape mismatch " + a.shape_string() + " vs " + s.shape_string());
  }
  Mat<T> out = a.value();
  for (Index r = 0; r < out.rows(); ++r) out.row(r) *= s.value()(r, 0);
  return make_result<T>(std::move(out), {a, s}, [](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& ps = self.parents[1];
    if (pa->requires_grad) {
      Mat<T> d = self.grad;
      for (Index r = 0; r < d.rows(); ++r) d.row(r) *= ps->value(r, 0);
      pa->accumulate(d);
    }
    if (ps->requires_grad) ps->accumulate(self.grad.cwiseProduct(pa->value).rowwise().sum());
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  Mat<T> out = a.value().unaryExpr([slope](T x) { return x > T(0) ? x : slope * x; });
  return make_result<T>(std::move(out), {a}, [slope](Node<T>& self) {
    auto& p = self.parents[0];
    p->accumulate(self.grad.binaryExpr(p->value, [slope](T g, T x) { return x > T(0) ? g : slope * g; }));
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return leaky_relu(a, T(0));
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  Mat<T> out = a.value().array().exp().matrix();
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad.cwiseProduct(self.value));
  });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  Mat<T> out = a.value().array().log().matrix();
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    p->accumulate(self.grad.cwiseQuotient(p->value));
  });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  Mat<T> out = a.value().array().tanh().matrix();
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    self.parents[0]->accumulate(
        self.grad.binaryExpr(self.value, [](T g, T y) { return g * (T(1) - y * y); }));
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

/// Stacks tensors along `axis` (0: rows, 1: columns).
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DomainError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DomainError("concat: axis must be 0 or 1");
  Index rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (axis == 1) {
      if (p.rows() != parts.front().rows()) {
        throw DomainError("concat: shape mismatch " + parts.front().shape_string() + " vs " + p.shape_string());
      }
      cols += p.cols();
    } else {
      if (p.cols() != parts.front().cols()) {
        throw DomainError("concat: shape mismatch " + parts.front().shape_string() + " vs " + p.shape_string());
      }
      rows += p.rows();
    }
  }
  if (axis == 1) rows = parts.front().rows();
  else cols = parts.front().cols();
  Mat<T> out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    if (axis == 1) {
      out.middleCols(off, p.cols()) = p.value();
      off += p.cols();
    } else {
      out.middleRows(off, p.rows()) = p.value();
      off += p.rows();
    }
  }
  return make_result<T>(std::move(out), parts, [axis, offsets](Node<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (!p->requires_grad) continue;
      if (axis == 1) p->accumulate(self.grad.middleCols(offsets[i], p->value.cols()));
      else p->accumulate(self.grad.middleRows(offsets[i], p->value.rows()));
    }
  });
}

/// Half-open range [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, Index begin, Index end) {
  const Index extent = axis == 0 ? a.rows() : a.cols();
  if ((axis != 0 && axis != 1) || begin < 0 || end > extent || begin > end) {
    throw DomainError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                      a.shape_string());
  }
  Mat<T> out = axis == 0 ? Mat<T>(a.value().middleRows(begin, end - begin))
                         : Mat<T>(a.value().middleCols(begin, end - begin));
  return make_result<T>(std::move(out), {a}, [axis, begin](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    if (axis == 0) g.middleRows(begin, self.grad.rows()) += self.grad;
    else g.middleCols(begin, self.grad.cols()) += self.grad;
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a, int axis) {
  if (axis != 0 && axis != 1) throw DomainError("sum: axis must be 0 or 1");
  Mat<T> out = axis == 0 ? Mat<T>(a.value().colwise().sum()) : Mat<T>(a.value().rowwise().sum());
  return make_result<T>(std::move(out), {a}, [axis](Node<T>& self) {
    auto& p = self.parents[0];
    Mat<T> d(p->value.rows(), p->value.cols());
    if (axis == 0) d.rowwise() = self.grad.row(0);
    else d.colwise() = self.grad.col(0);
    p->accumulate(d);
  });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  Mat<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    p->accumulate(Mat<T>::Constant(p->value.rows(), p->value.cols(), self.grad(0, 0)));
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, int axis) {
  const Index n = axis == 0 ? a.rows() : a.cols();
  if (n == 0) throw DomainError("mean over an empty axis");
  return scale(sum(a, axis), T(1) / static_cast<T>(n));
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  if (a.value().size() == 0) throw DomainError("mean of an empty tensor");
  return scale(sum_all(a), T(1) / static_cast<T>(a.value().size()));
}

/// Maximum along `axis`; the gradient flows to the first maximal element.
template <typename T>
Tensor<T> max(const Tensor<T>& a, int axis) {
  if (axis != 0 && axis != 1) throw DomainError("max: axis must be 0 or 1");
  const auto& v = a.value();
  const Index groups = axis == 0 ? v.cols() : v.rows();
  const Index len = axis == 0 ? v.rows() : v.cols();
  if (len == 0) throw DomainError("max over an empty axis");
  Mat<T> out = axis == 0 ? Mat<T>(1, groups) : Mat<T>(groups, 1);
  std::vector<Index> arg(static_cast<std::size_t>(groups));
  for (Index g = 0; g < groups; ++g) {
    Index best = 0;
    T best_v = axis == 0 ? v(0, g) : v(g, 0);
    for (Index i = 1; i < len; ++i) {
      const T x = axis == 0 ? v(i, g) : v(g, i);
      if (x > best_v) {
        best_v = x;
        best = i;
      }
    }
    arg[static_cast<std::size_t>(g)] = best;
    if (axis == 0) out(0, g) = best_v;
    else out(g, 0) = best_v;
  }
  return make_result<T>(std::move(out), {a}, [axis, arg](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < arg.size(); ++i) {
      const auto gi = static_cast<Index>(i);
      if (axis == 0) g(arg[i], gi) += self.grad(0, gi);
      else g(gi, arg[i]) += self.grad(gi, 0);
    }
  });
}

}  // namespace edgegat
