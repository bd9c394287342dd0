#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "edgegat/graph_ops.hpp"
#include "edgegat/nn/layers.hpp"

namespace edgegat::nn {

struct EdgeConvSpec {
  ResidualMLPSpec mlp;
  Aggregation aggregation = Aggregation::sum;
  bool dynamic_knn = false;  // rebuild the graph from current features (per batch member)
  std::size_t dynamic_k = 16;
  // Evaluate the linear parts of the MLP per vertex instead of per edge. Same
  // function; only valid for sum and mean aggregation.
  bool factored = true;
};

/// k nearest neighbors of each row of `h` in feature space, restricted to rows
/// with the same batch id; closed under reversal. Ties go to the lower index.
template <typename T>
GraphTopology feature_knn_graph(const Mat<T>& h, const std::vector<std::uint32_t>& batch, std::size_t k) {
  const auto n = static_cast<std::size_t>(h.rows());
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t v = 0; v < n; ++v) {
    if (batch[v] >= members.size()) members.resize(batch[v] + 1);
    members[batch[v]].push_back(v);
  }
  std::vector<std::pair<VertexId, VertexId>> pairs;
  std::vector<std::pair<double, std::size_t>> cand;
  for (const auto& group : members) {
    if (group.size() <= 1) continue;
    const std::size_t kk = std::min(k, group.size() - 1);
    for (auto i : group) {
      cand.clear();
      for (auto j : group) {
        if (j == i) continue;
        cand.emplace_back(static_cast<double>((h.row(static_cast<Index>(i)) - h.row(static_cast<Index>(j))).squaredNorm()), j);
      }
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end());
      for (std::size_t t = 0; t < kk; ++t) pairs.emplace_back(static_cast<VertexId>(i), static_cast<VertexId>(cand[t].second));
    }
  }
  return undirected_topology(n, std::move(pairs), batch);
}

/// Edge convolution: for each edge j -> i the residual MLP maps
/// [h_i || h_j - h_i] to an edge feature, aggregated into vertex i.
template <typename T>
class EdgeConv {
 public:
  EdgeConv() = default;
  EdgeConv(const EdgeConvSpec& spec, std::mt19937_64& rng) : spec_(spec), mlp_(spec.mlp, rng) {
    if (spec.mlp.d_in % 2 != 0) throw DomainError("edge convolution input width must be even (2 x vertex width)");
  }

  Tensor<T> operator()(const Tensor<T>& h, const GraphInput& graph, const ForwardContext<T>& ctx,
                       const std::string& name = "edgeconv") const {
    if (h.cols() * 2 != spec_.mlp.d_in) {
      throw DomainError(name + ": input width " + std::to_string(h.cols()) + " does not match edge width " +
                        std::to_string(spec_.mlp.d_in));
    }
    if (static_cast<std::size_t>(h.rows()) != graph.topology.num_vertices) {
      throw DomainError(name + ": feature rows differ from vertex count");
    }
    if (spec_.dynamic_knn) {
      const GraphInput dynamic(feature_knn_graph(h.value(), graph.topology.batch, spec_.dynamic_k));
      return apply(h, dynamic.topology, ctx, name);
    }
    return apply(h, graph.topology, ctx, name);
  }

  const EdgeConvSpec& spec() const { return spec_; }
  ResidualMLP<T>& mlp() { return mlp_; }

  void collect(ParameterList<T>& out, const std::string& prefix) const { mlp_.collect(out, prefix + ".mlp"); }

 private:
  Tensor<T> apply(const Tensor<T>& h, const GraphTopology& g, const ForwardContext<T>& ctx,
                  const std::string& name) const {
    if (spec_.factored && spec_.aggregation != Aggregation::max) return apply_factored(h, g, ctx, name);
    const auto center = gather_rows(h, g.dst);
    const auto neighbor = gather_rows(h, g.src);
    const auto edge_in = concat<T>({center, sub(neighbor, center)}, 1);
    ctx.record(name + ".edge_input", edge_in);
    const auto edge_out = mlp_(edge_in, ctx, name + ".mlp");
    auto out = scatter_aggregate(edge_out, g.dst, g.num_vertices, spec_.aggregation);
    ctx.record(name + ".out", out);
    return out;
  }

  // [h_i || h_j - h_i] W1 = h_i (W1_top - W1_bot) + h_j W1_bot, and the second
  // linear map and the skip commute with sum/mean aggregation.
  Tensor<T> apply_factored(const Tensor<T>& h, const GraphTopology& g, const ForwardContext<T>& ctx,
                           const std::string& name) const {
    const Index d = h.cols();
    const auto n = g.num_vertices;
    const auto edges = static_cast<Index>(g.num_edges());
    const auto& sp = spec_.mlp;
    ctx.record(name + ".edge_input", edges, 2 * d);

    Mat<T> count = Mat<T>::Zero(static_cast<Index>(n), 1);
    for (auto v : g.dst) count(v, 0) += T(1);
    if (spec_.aggregation == Aggregation::mean) count = (count.array() > T(0)).template cast<T>().matrix();
    const Tensor<T> c(std::move(count));

    const auto nb = scatter_aggregate(gather_rows(h, g.src), g.dst, n, spec_.aggregation);
    const auto ch = scale_rows(h, c);
    const auto agg_in = concat<T>({ch, sub(nb, ch)}, 1);
    const auto skip = mlp_.has_projection() ? matmul(agg_in, mlp_.skip().weight()) : agg_in;

    const auto& w1 = mlp_.fc1().weight();
    const auto top = slice(w1, 0, 0, d);
    const auto bot = slice(w1, 0, d, 2 * d);
    const auto a = add_bias(matmul(h, sub(top, bot)), mlp_.fc1().bias());
    const auto b = matmul(h, bot);
    auto z = add(gather_rows(a, g.dst), gather_rows(b, g.src));
    ctx.record(name + ".mlp.hidden", z);
    z = mlp_.bn()(z, ctx);
    z = leaky_relu(z, static_cast<T>(sp.slope));
    z = dropout(z, sp.dropout_p, ctx);
    ctx.record(name + ".mlp.out", edges, sp.d_out);
    const auto zagg = scatter_aggregate(z, g.dst, n, spec_.aggregation);
    const auto f = add(matmul(zagg, mlp_.fc2().weight()), matmul(c, mlp_.fc2().bias()));
    auto out = add(f, skip);
    ctx.record(name + ".out", out);
    return out;
  }

  EdgeConvSpec spec_;
  ResidualMLP<T> mlp_;
};

}  // namespace edgegat::nn
