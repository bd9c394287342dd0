#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "edgegat/cloud.hpp"
#include "edgegat/error.hpp"
#include "edgegat/kdtree.hpp"

namespace edgegat {

using VertexId = std::uint32_t;

/// Directed edge list (message flows src -> dst) plus per-vertex graph membership.
///
/// Invariants checked by validate(): ids in range, no self-edges, every edge has
/// its reverse, and no edge joins vertices of different batch ids. Edges built
/// here are sorted by (dst, src).
struct GraphTopology {
  std::size_t num_vertices = 0;
  std::vector<VertexId> src;
  std::vector<VertexId> dst;
  std::vector<std::uint32_t> batch;  // size num_vertices

  std::size_t num_edges() const noexcept { return src.size(); }

  std::size_t num_graphs() const noexcept {
    return batch.empty() ? 0 : static_cast<std::size_t>(*std::max_element(batch.begin(), batch.end())) + 1;
  }

  std::vector<std::size_t> in_degree() const {
    std::vector<std::size_t> deg(num_vertices, 0);
    for (auto d : dst) ++deg[d];
    return deg;
  }

  void validate() const {
    if (src.size() != dst.size()) throw DomainError("edge index rows differ in length");
    if (batch.size() != num_vertices) throw DomainError("batch vector length differs from vertex count");
    std::vector<std::pair<VertexId, VertexId>> pairs;
    pairs.reserve(src.size());
    for (std::size_t e = 0; e < src.size(); ++e) {
      if (src[e] >= num_vertices || dst[e] >= num_vertices) throw DomainError("edge endpoint out of range");
      if (src[e] == dst[e]) throw DomainError("self-edge in edge index");
      if (batch[src[e]] != batch[dst[e]]) throw DomainError("edge crosses batch members");
      pairs.emplace_back(src[e], dst[e]);
    }
    std::sort(pairs.begin(), pairs.end());
    for (const auto& [s, d] : pairs) {
      if (!std::binary_search(pairs.begin(), pairs.end(), std::make_pair(d, s))) {
        throw DomainError("edge index is not symmetric");
      }
    }
  }
};

/// Builds a topology from undirected pairs: emits both directions, drops
/// duplicates and self pairs, and sorts by (dst, src).
inline GraphTopology undirected_topology(std::size_t num_vertices, std::vector<std::pair<VertexId, VertexId>> pairs,
                                         std::vector<std::uint32_t> batch = {}) {
  std::vector<std::pair<VertexId, VertexId>> directed;  // (dst, src)
  directed.reserve(pairs.size() * 2);
  for (const auto& [a, b] : pairs) {
    if (a == b) continue;
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
  GraphTopology g;
  g.num_vertices = num_vertices;
  g.src.reserve(directed.size());
  g.dst.reserve(directed.size());
  for (const auto& [d, s] : directed) {
    g.dst.push_back(d);
    g.src.push_back(s);
  }
  g.batch = batch.empty() ? std::vector<std::uint32_t>(num_vertices, 0) : std::move(batch);
  return g;
}

/// For every point, its k nearest other points by Euclidean distance (ties to lower index).
inline std::vector<std::vector<VertexId>> knn_lists(const PointCloud& cloud, std::size_t k) {
  if (k == 0) throw DomainError("k must be >= 1");
  if (k >= cloud.size()) {
    throw DomainError("k=" + std::to_string(k) + " must be smaller than the point count " +
                      std::to_string(cloud.size()));
  }
  const KdTree tree(cloud.points);
  std::vector<std::vector<VertexId>> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nbrs = tree.knn(cloud.points[i], k, static_cast<std::uint32_t>(i));
    out[i].reserve(k);
    for (const auto& n : nbrs) out[i].push_back(n.index);
  }
  return out;
}

inline GraphTopology topology_from_lists(const std::vector<std::vector<VertexId>>& lists,
                                         std::vector<std::uint32_t> batch = {}) {
  std::vector<std::pair<VertexId, VertexId>> pairs;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    for (auto j : lists[i]) pairs.emplace_back(static_cast<VertexId>(i), j);
  }
  return undirected_topology(lists.size(), std::move(pairs), std::move(batch));
}

/// Spatial k-nearest-neighbor graph, closed under edge reversal.
inline GraphTopology knn_graph(const PointCloud& cloud, std::size_t k) {
  cloud.validate();
  return topology_from_lists(knn_lists(cloud, k));
}

/// Disjoint union of graphs with their vertex features stacked in order.
template <typename Matrix>
std::pair<GraphTopology, Matrix> batch_graphs(const std::vector<std::pair<GraphTopology, Matrix>>& graphs) {
  if (graphs.empty()) throw DomainError("batch_graphs needs at least one graph");
  const auto width = graphs.front().second.cols();
  std::size_t total_v = 0, total_e = 0;
  for (const auto& [g, f] : graphs) {
    if (f.cols() != width) {
      throw DomainError("feature width " + std::to_string(f.cols()) + " differs from " + std::to_string(width));
    }
    if (static_cast<std::size_t>(f.rows()) != g.num_vertices) {
      throw DomainError("feature rows differ from vertex count");
    }
    total_v += g.num_vertices;
    total_e += g.num_edges();
  }
  GraphTopology out;
  out.num_vertices = total_v;
  out.src.reserve(total_e);
  out.dst.reserve(total_e);
  out.batch.reserve(total_v);
  Matrix features(static_cast<Eigen::Index>(total_v), width);
  std::size_t offset = 0;
  std::uint32_t graph_id = 0;
  for (const auto& [g, f] : graphs) {
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      out.src.push_back(static_cast<VertexId>(g.src[e] + offset));
      out.dst.push_back(static_cast<VertexId>(g.dst[e] + offset));
    }
    out.batch.insert(out.batch.end(), g.num_vertices, graph_id);
    features.middleRows(static_cast<Eigen::Index>(offset), f.rows()) = f;
    offset += g.num_vertices;
    ++graph_id;
  }
  return {std::move(out), std::move(features)};
}

/// Sparse symmetric operator D^-1/2 (A + I) D^-1/2 in CSR form.
struct NormalizedAdjacency {
  std::size_t num_vertices = 0;
  std::vector<std::size_t> row_ptr;  // size num_vertices + 1
  std::vector<VertexId> col;
  std::vector<double> val;

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_vertices),
                                              static_cast<Eigen::Index>(num_vertices));
    for (std::size_t r = 0; r < num_vertices; ++r) {
      for (auto p = row_ptr[r]; p < row_ptr[r + 1]; ++p) m(static_cast<Eigen::Index>(r), col[p]) += val[p];
    }
    return m;
  }
};

/// GCN propagation operator with self-loops. Row r collects the messages
/// arriving at vertex r; columns within a row are ascending.
inline NormalizedAdjacency normalize_adjacency(const GraphTopology& g) {
  const std::size_t n = g.num_vertices;
  std::vector<double> degree(n, 1.0);  // self-loop
  for (auto d : g.dst) degree[d] += 1.0;
  std::vector<std::vector<VertexId>> rows(n);
  for (std::size_t v = 0; v < n; ++v) rows[v].push_back(static_cast<VertexId>(v));
  for (std::size_t e = 0; e < g.num_edges(); ++e) rows[g.dst[e]].push_back(g.src[e]);
  NormalizedAdjacency adj;
  adj.num_vertices = n;
  adj.row_ptr.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) {
    std::sort(rows[v].begin(), rows[v].end());
    adj.row_ptr[v + 1] = adj.row_ptr[v] + rows[v].size();
  }
  adj.col.reserve(adj.row_ptr[n]);
  adj.val.reserve(adj.row_ptr[n]);
  for (std::size_t v = 0; v < n; ++v) {
    for (auto u : rows[v]) {
      adj.col.push_back(u);
      adj.val.push_back(1.0 / std::sqrt(degree[v] * degree[u]));
    }
  }
  return adj;
}

/// Appends one self-loop per vertex, keeping (dst, src) order.
inline std::pair<std::vector<VertexId>, std::vector<VertexId>> edges_with_self_loops(const GraphTopology& g) {
  std::vector<std::pair<VertexId, VertexId>> directed;
  directed.reserve(g.num_edges() + g.num_vertices);
  for (std::size_t e = 0; e < g.num_edges(); ++e) directed.emplace_back(g.dst[e], g.src[e]);
  for (std::size_t v = 0; v < g.num_vertices; ++v) directed.emplace_back(static_cast<VertexId>(v), static_cast<VertexId>(v));
  std::sort(directed.begin(), directed.end());
  std::pair<std::vector<VertexId>, std::vector<VertexId>> out;
  out.first.reserve(directed.size());
  out.second.reserve(directed.size());
  for (const auto& [d, s] : directed) {
    out.first.push_back(s);
    out.second.push_back(d);
  }
  return out;
}

/// Subgraph induced by `kept` (old vertex ids, ascending). Vertex i of the result is kept[i].
inline GraphTopology induced_subgraph(const GraphTopology& g, const std::vector<VertexId>& kept) {
  std::vector<std::int64_t> remap(g.num_vertices, -1);
  for (std::size_t i = 0; i < kept.size(); ++i) remap[kept[i]] = static_cast<std::int64_t>(i);
  GraphTopology out;
  out.num_vertices = kept.size();
  out.batch.reserve(kept.size());
  for (auto v : kept) out.batch.push_back(g.batch[v]);
  std::vector<std::pair<VertexId, VertexId>> directed;
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const auto s = remap[g.src[e]], d = remap[g.dst[e]];
    if (s >= 0 && d >= 0) directed.emplace_back(static_cast<VertexId>(d), static_cast<VertexId>(s));
  }
  std::sort(directed.begin(), directed.end());
  for (const auto& [d, s] : directed) {
    out.dst.push_back(d);
    out.src.push_back(s);
  }
  return out;
}

/// Debug dump: one `src dst` pair per line.
inline void write_edge_list(const GraphTopology& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (std::size_t e = 0; e < g.num_edges(); ++e) out << g.src[e] << ' ' << g.dst[e] << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace edgegat
