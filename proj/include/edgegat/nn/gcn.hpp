#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "edgegat/graph_ops.hpp"
#include "edgegat/nn/layers.hpp"

namespace edgegat::nn {

/// H' = A_hat H W + b with A_hat = D^-1/2 (A + I) D^-1/2. No activation.
template <typename T>
class GCNConv {
 public:
  GCNConv() = default;
  GCNConv(Index in, Index out, std::mt19937_64& rng) : lin_(in, out, true, rng) {}

  Tensor<T> operator()(const Tensor<T>& h, const GraphInput& graph) const {
    if (h.cols() != lin_.in_features()) {
      throw DomainError("gcn: shape mismatch " + h.shape_string() + " vs input width " +
                        std::to_string(lin_.in_features()));
    }
    const auto hw = matmul(h, lin_.weight());
    return add_bias(spmm(graph.adjacency(), hw), lin_.bias());
  }

  Linear<T>& linear() { return lin_; }
  void collect(ParameterList<T>& out, const std::string& prefix) const { lin_.collect(out, prefix); }

 private:
  Linear<T> lin_;
};

/// p / |p| for a column vector.
template <typename T>
Tensor<T> unit_vector(const Tensor<T>& p) {
  const T norm = p.value().norm();
  if (!(norm > T(0))) throw DomainError("unit_vector of a zero vector");
  Mat<T> y = p.value() / norm;
  return make_result<T>(y, {p}, [y, norm](Node<T>& self) {
    const T dot = (self.grad.cwiseProduct(y)).sum();
    self.parents[0]->accumulate((self.grad - dot * y) / norm);
  });
}

struct PoolResult {
  std::vector<VertexId> kept;  // ascending ids in the input graph
  std::size_t input_vertices = 0;
  bool identity = false;
};

/// Keeps ceil(ratio * n_b) vertices of every batch member by the projection
/// score s = H p / |p| (ties to the lower id) and gates them by tanh(s).
/// ratio == 1 is a no-op.
template <typename T>
class TopKPool {
 public:
  TopKPool() = default;
  TopKPool(Index dim, double ratio, std::mt19937_64& rng)
      : ratio_(ratio), p_(glorot_uniform<T>(dim, 1, dim, 1, rng), true) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw DomainError("pool ratio must lie in (0, 1]");
  }

  struct Output {
    Tensor<T> h;
    GraphInput graph;
    PoolResult info;
  };

  Output operator()(const Tensor<T>& h, const GraphInput& graph) const {
    const auto& g = graph.topology;
    const auto n = g.num_vertices;
    if (static_cast<std::size_t>(h.rows()) != n || h.cols() != p_.rows()) {
      throw DomainError("topk_pool: shape mismatch " + h.shape_string() + " vs score vector " + p_.shape_string());
    }
    if (ratio_ >= 1.0) {
      std::vector<VertexId> all(n);
      std::iota(all.begin(), all.end(), VertexId{0});
      return {h, GraphInput(g), {std::move(all), n, true}};
    }
    const auto score = matmul(h, unit_vector(p_));
    std::vector<std::vector<VertexId>> members(g.num_graphs());
    for (std::size_t v = 0; v < n; ++v) members[g.batch[v]].push_back(static_cast<VertexId>(v));
    std::vector<VertexId> kept;
    const auto& s = score.value();
    for (auto& group : members) {
      const auto keep = static_cast<std::size_t>(std::ceil(ratio_ * static_cast<double>(group.size()) - 1e-9));
      std::stable_sort(group.begin(), group.end(), [&](VertexId a, VertexId b) { return s(a, 0) > s(b, 0); });
      kept.insert(kept.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(std::min(keep, group.size())));
    }
    std::sort(kept.begin(), kept.end());
    auto gate = tanh(gather_rows(score, kept));
    auto pooled = scale_rows(gather_rows(h, kept), gate);
    GraphInput sub(induced_subgraph(g, kept));
    return {pooled, std::move(sub), {std::move(kept), n, false}};
  }

  double ratio() const { return ratio_; }
  Tensor<T>& score_vector() { return p_; }
  void collect(ParameterList<T>& out, const std::string& prefix) const { out.push_back({prefix + ".score", p_, true}); }

 private:
  double ratio_ = 1.0;
  Tensor<T> p_;
};

/// Scatters pooled rows back to their original positions (zeros elsewhere) and adds `skip`.
template <typename T>
Tensor<T> unpool(const Tensor<T>& h, const PoolResult& info, const Tensor<T>& skip) {
  if (static_cast<std::size_t>(h.rows()) != info.kept.size() ||
      static_cast<std::size_t>(skip.rows()) != info.input_vertices || skip.cols() != h.cols()) {
    throw DomainError("unpool: shape mismatch " + h.shape_string() + " vs skip " + skip.shape_string());
  }
  if (info.identity) return add(h, skip);
  return add(scatter_aggregate(h, info.kept, info.input_vertices, Aggregation::sum), skip);
}

}  // namespace edgegat::nn
