#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "edgegat/graph.hpp"
#include "edgegat/tensor.hpp"

namespace edgegat {

enum class Aggregation { sum, mean, max };

namespace detail {

inline void check_ids(const char* op, std::span<const std::uint32_t> ids, std::size_t bound) {
  for (auto id : ids) {
    if (id >= bound) {
      throw DomainError(std::string(op) + ": id " + std::to_string(id) + " out of range for " +
                        std::to_string(bound) + " rows");
    }
  }
}

}  // namespace detail

/// out.row(e) = a.row(index[e]).
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::uint32_t> index) {
  detail::check_ids("gather_rows", index, static_cast<std::size_t>(a.rows()));
  Mat<T> out(static_cast<Index>(index.size()), a.cols());
  for (std::size_t e = 0; e < index.size(); ++e) out.row(static_cast<Index>(e)) = a.value().row(index[e]);
  auto idx = detail::share_indices(index);
  return make_result<T>(std::move(out), {a}, [idx](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t e = 0; e < idx->size(); ++e) g.row((*idx)[e]) += self.grad.row(static_cast<Index>(e));
  });
}

/// Aggregates message rows into their destination rows. Vertices that receive
/// nothing get a zero row in every mode. Max routes the gradient to the first
/// (lowest edge index) maximal message per column.
template <typename T>
Tensor<T> scatter_aggregate(const Tensor<T>& messages, std::span<const std::uint32_t> destinations,
                            std::size_t num_vertices, Aggregation mode) {
  if (static_cast<std::size_t>(messages.rows()) != destinations.size()) {
    throw DomainError("scatter_aggregate: " + std::to_string(destinations.size()) + " destinations for " +
                      messages.shape_string() + " messages");
  }
  detail::check_ids("scatter_aggregate", destinations, num_vertices);
  const auto& m = messages.value();
  const Index d = m.cols();
  Mat<T> out = Mat<T>::Zero(static_cast<Index>(num_vertices), d);
  auto dst = detail::share_indices(destinations);

  if (mode == Aggregation::max) {
    std::vector<std::int64_t> arg(num_vertices * static_cast<std::size_t>(d), -1);
    for (std::size_t e = 0; e < dst->size(); ++e) {
      const auto v = (*dst)[e];
      for (Index c = 0; c < d; ++c) {
        auto& a = arg[v * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
        const T x = m(static_cast<Index>(e), c);
        if (a < 0 || x > out(v, c)) {
          a = static_cast<std::int64_t>(e);
          out(v, c) = x;
        }
      }
    }
    return make_result<T>(std::move(out), {messages}, [arg = std::move(arg), d](Node<T>& self) {
      auto& g = self.parents[0]->grad_buffer();
      const auto n = static_cast<std::size_t>(self.grad.rows());
      for (std::size_t v = 0; v < n; ++v) {
        for (Index c = 0; c < d; ++c) {
          const auto a = arg[v * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
          if (a >= 0) g(a, c) += self.grad(static_cast<Index>(v), c);
        }
      }
    });
  }

  for (std::size_t e = 0; e < dst->size(); ++e) out.row((*dst)[e]) += m.row(static_cast<Index>(e));
  std::vector<T> inv_count;
  if (mode == Aggregation::mean) {
    std::vector<std::size_t> count(num_vertices, 0);
    for (auto v : *dst) ++count[v];
    inv_count.resize(num_vertices);
    for (std::size_t v = 0; v < num_vertices; ++v) {
      inv_count[v] = count[v] ? T(1) / static_cast<T>(count[v]) : T(0);
      out.row(static_cast<Index>(v)) *= inv_count[v];
    }
  }
  return make_result<T>(std::move(out), {messages}, [dst, inv_count = std::move(inv_count)](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t e = 0; e < dst->size(); ++e) {
      const auto v = (*dst)[e];
      if (inv_count.empty()) g.row(static_cast<Index>(e)) += self.grad.row(v);
      else g.row(static_cast<Index>(e)) += inv_count[v] * self.grad.row(v);
    }
  });
}

/// Softmax of each column of `logits` (E x H) within groups of rows sharing a
/// destination: out(e,h) = exp(l(e,h) - max_group) / sum_group exp(...).
template <typename T>
Tensor<T> segment_softmax(const Tensor<T>& logits, std::span<const std::uint32_t> destinations,
                          std::size_t num_vertices) {
  if (static_cast<std::size_t>(logits.rows()) != destinations.size()) {
    throw DomainError("segment_softmax: " + std::to_string(destinations.size()) + " destinations for " +
                      logits.shape_string() + " logits");
  }
  detail::check_ids("segment_softmax", destinations, num_vertices);
  const auto& l = logits.value();
  const Index h = l.cols();
  Mat<T> group_max = Mat<T>::Constant(static_cast<Index>(num_vertices), h, -std::numeric_limits<T>::infinity());
  for (std::size_t e = 0; e < destinations.size(); ++e) {
    group_max.row(destinations[e]) = group_max.row(destinations[e]).cwiseMax(l.row(static_cast<Index>(e)));
  }
  Mat<T> out(l.rows(), h);
  Mat<T> denom = Mat<T>::Zero(static_cast<Index>(num_vertices), h);
  for (std::size_t e = 0; e < destinations.size(); ++e) {
    const auto v = destinations[e];
    const auto ei = static_cast<Index>(e);
    out.row(ei) = (l.row(ei) - group_max.row(v)).array().exp().matrix();
    denom.row(v) += out.row(ei);
  }
  for (std::size_t e = 0; e < destinations.size(); ++e) {
    out.row(static_cast<Index>(e)) = out.row(static_cast<Index>(e)).cwiseQuotient(denom.row(destinations[e]));
  }
  auto dst = detail::share_indices(destinations);
  return make_result<T>(std::move(out), {logits}, [dst, num_vertices](Node<T>& self) {
    const auto& y = self.value;
    Mat<T> dot = Mat<T>::Zero(static_cast<Index>(num_vertices), y.cols());
    for (std::size_t e = 0; e < dst->size(); ++e) {
      dot.row((*dst)[e]) += self.grad.row(static_cast<Index>(e)).cwiseProduct(y.row(static_cast<Index>(e)));
    }
    Mat<T> d(y.rows(), y.cols());
    for (std::size_t e = 0; e < dst->size(); ++e) {
      const auto ei = static_cast<Index>(e);
      d.row(ei) = y.row(ei).cwiseProduct(self.grad.row(ei) - dot.row((*dst)[e]));
    }
    self.parents[0]->accumulate(d);
  });
}

/// Per-head dot products: x is N x (H*D) with head h in columns [h*D, (h+1)*D),
/// a is H x D. Returns N x H with out(n,h) = <x(n, head h), a(h, :)>.
template <typename T>
Tensor<T> head_dot(const Tensor<T>& x, const Tensor<T>& a) {
  const Index heads = a.rows(), dim = a.cols();
  if (x.cols() != heads * dim) {
    throw DomainError("head_dot: shape mismatch " + x.shape_string() + " vs " + a.shape_string());
  }
  Mat<T> out(x.rows(), heads);
  for (Index h = 0; h < heads; ++h) {
    out.col(h).noalias() = x.value().middleCols(h * dim, dim) * a.value().row(h).transpose();
  }
  return make_result<T>(std::move(out), {x, a}, [heads, dim](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pa = self.parents[1];
    if (px->requires_grad) {
      auto& g = px->grad_buffer();
      for (Index h = 0; h < heads; ++h) g.middleCols(h * dim, dim).noalias() += self.grad.col(h) * pa->value.row(h);
    }
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (Index h = 0; h < heads; ++h) {
        g.row(h).noalias() += self.grad.col(h).transpose() * px->value.middleCols(h * dim, dim);
      }
    }
  });
}

/// Attention-weighted neighborhood sum for H heads of width D:
/// out(dst_e, head h) += alpha(e, h) * x(src_e, head h).
template <typename T>
Tensor<T> attention_aggregate(const Tensor<T>& alpha, const Tensor<T>& x, std::span<const std::uint32_t> src,
                              std::span<const std::uint32_t> dst, std::size_t num_vertices) {
  const Index heads = alpha.cols();
  if (heads == 0 || x.cols() % heads != 0 || static_cast<std::size_t>(alpha.rows()) != src.size() ||
      src.size() != dst.size()) {
    throw DomainError("attention_aggregate: shape mismatch " + alpha.shape_string() + " vs " + x.shape_string());
  }
  detail::check_ids("attention_aggregate", src, static_cast<std::size_t>(x.rows()));
  detail::check_ids("attention_aggregate", dst, num_vertices);
  const Index dim = x.cols() / heads;
  const auto& av = alpha.value();
  const auto& xv = x.value();
  Mat<T> out = Mat<T>::Zero(static_cast<Index>(num_vertices), x.cols());
  for (std::size_t e = 0; e < src.size(); ++e) {
    const auto ei = static_cast<Index>(e);
    for (Index h = 0; h < heads; ++h) {
      out.row(dst[e]).segment(h * dim, dim) += av(ei, h) * xv.row(src[e]).segment(h * dim, dim);
    }
  }
  auto s = detail::share_indices(src);
  auto d = detail::share_indices(dst);
  return make_result<T>(std::move(out), {alpha, x}, [s, d, heads, dim](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& px = self.parents[1];
    const auto& av = pa->value;
    const auto& xv = px->value;
    Mat<T>* ga = pa->requires_grad ? &pa->grad_buffer() : nullptr;
    Mat<T>* gx = px->requires_grad ? &px->grad_buffer() : nullptr;
    for (std::size_t e = 0; e < s->size(); ++e) {
      const auto ei = static_cast<Index>(e);
      const auto se = (*s)[e], de = (*d)[e];
      for (Index h = 0; h < heads; ++h) {
        const auto g = self.grad.row(de).segment(h * dim, dim);
        if (ga) (*ga)(ei, h) += g.dot(xv.row(se).segment(h * dim, dim));
        if (gx) gx->row(se).segment(h * dim, dim) += av(ei, h) * g;
      }
    }
  });
}

/// Sparse product adj * x with a CSR operator.
template <typename T>
Tensor<T> spmm(const NormalizedAdjacency& adj, const Tensor<T>& x) {
  if (static_cast<std::size_t>(x.rows()) != adj.num_vertices) {
    throw DomainError("spmm: operator over " + std::to_string(adj.num_vertices) + " vertices applied to " +
                      x.shape_string());
  }
  const auto n = adj.num_vertices;
  Mat<T> out = Mat<T>::Zero(x.rows(), x.cols());
  for (std::size_t r = 0; r < n; ++r) {
    for (auto p = adj.row_ptr[r]; p < adj.row_ptr[r + 1]; ++p) {
      out.row(static_cast<Index>(r)) += static_cast<T>(adj.val[p]) * x.value().row(adj.col[p]);
    }
  }
  auto op = std::make_shared<const NormalizedAdjacency>(adj);
  return make_result<T>(std::move(out), {x}, [op](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < op->num_vertices; ++r) {
      for (auto p = op->row_ptr[r]; p < op->row_ptr[r + 1]; ++p) {
        g.row(op->col[p]) += static_cast<T>(op->val[p]) * self.grad.row(static_cast<Index>(r));
      }
    }
  });
}

}  // namespace edgegat
