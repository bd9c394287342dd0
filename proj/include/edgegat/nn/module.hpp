#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "edgegat/graph.hpp"
#include "edgegat/tensor.hpp"

namespace edgegat::nn {

/// A named tensor owned by a layer. Buffers (batch-norm running statistics) are
/// saved in checkpoints but never touched by the optimizer.
template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

/// Records (name, rows, cols) of intermediate activations for structural checks.
struct ShapeTrace {
  struct Entry {
    std::string name;
    Index rows = 0, cols = 0;
  };
  std::vector<Entry> entries;

  void record(std::string name, Index rows, Index cols) { entries.push_back({std::move(name), rows, cols}); }

  std::optional<Entry> find(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.name == name) return e;
    }
    return std::nullopt;
  }
};

/// Per-call state threaded through every layer.
template <typename T>
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;              // required when training with dropout > 0
  ShapeTrace* trace = nullptr;                 // optional
  std::vector<Mat<T>>* attention = nullptr;    // optional: one E x H matrix per attention layer
  std::vector<std::vector<std::uint32_t>>* attention_dst = nullptr;  // matching destinations

  void record(const std::string& name, const Tensor<T>& t) const {
    if (trace) trace->record(name, t.rows(), t.cols());
  }
  void record(const std::string& name, Index rows, Index cols) const {
    if (trace) trace->record(name, rows, cols);
  }
};

/// Graph plus lazily derived operators, shared by all layers in one forward pass.
struct GraphInput {
  explicit GraphInput(GraphTopology g) : topology(std::move(g)) {}

  GraphTopology topology;

  const NormalizedAdjacency& adjacency() const {
    if (!adj_) adj_ = normalize_adjacency(topology);
    return *adj_;
  }

  /// (src, dst) with one self-loop per vertex.
  const std::pair<std::vector<VertexId>, std::vector<VertexId>>& looped_edges() const {
    if (!loops_) loops_ = edges_with_self_loops(topology);
    return *loops_;
  }

 private:
  mutable std::optional<NormalizedAdjacency> adj_;
  mutable std::optional<std::pair<std::vector<VertexId>, std::vector<VertexId>>> loops_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
Mat<T> glorot_uniform(Index rows, Index cols, Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat<T> m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = static_cast<T>(dist(rng));
  }
  return m;
}

}  // namespace edgegat::nn
