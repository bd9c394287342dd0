#pragma once

#include <string>

#include "edgegat/graph_ops.hpp"
#include "edgegat/nn/layers.hpp"

namespace edgegat::nn {

enum class HeadCombine { concat, average };

struct GATLayerSpec {
  Index d_in = 1;
  Index d_out = 1;  // per head
  Index heads = 1;
  HeadCombine combine = HeadCombine::concat;
  double slope = 0.2;

  Index output_width() const { return combine == HeadCombine::concat ? heads * d_out : d_out; }

  void validate() const {
    if (d_in < 1 || d_out < 1) throw DomainError("attention layer widths must be >= 1");
    if (heads < 1) throw DomainError("attention layer needs at least one head");
  }
};

/// Multi-head graph attention with self-loops:
///   e_ij = LeakyReLU(a_dst . W h_i + a_src . W h_j),  alpha_ij = softmax_j(e_ij),
///   h'_i = sum_j alpha_ij W h_j, heads concatenated or averaged.
template <typename T>
class GATLayer {
 public:
  GATLayer() = default;
  GATLayer(const GATLayerSpec& spec, std::mt19937_64& rng)
      : spec_((spec.validate(), spec)),
        weight_(glorot_uniform<T>(spec.d_in, spec.heads * spec.d_out, spec.d_in, spec.heads * spec.d_out, rng), true),
        att_src_(glorot_uniform<T>(spec.heads, spec.d_out, spec.d_out, 1, rng), true),
        att_dst_(glorot_uniform<T>(spec.heads, spec.d_out, spec.d_out, 1, rng), true) {
    if (spec.combine == HeadCombine::average) {
      Mat<T> m = Mat<T>::Zero(spec.heads * spec.d_out, spec.d_out);
      for (Index h = 0; h < spec.heads; ++h) {
        m.middleRows(h * spec.d_out, spec.d_out).setIdentity();
      }
      average_ = Tensor<T>(m / static_cast<T>(spec.heads));
    }
  }

  Tensor<T> operator()(const Tensor<T>& h, const GraphInput& graph, const ForwardContext<T>& ctx,
                       const std::string& name = "gat") const {
    if (h.cols() != spec_.d_in) {
      throw DomainError(name + ": shape mismatch " + h.shape_string() + " vs input width " + std::to_string(spec_.d_in));
    }
    const auto n = graph.topology.num_vertices;
    if (static_cast<std::size_t>(h.rows()) != n) throw DomainError(name + ": feature rows differ from vertex count");
    const auto& [src, dst] = graph.looped_edges();
    const auto wh = matmul(h, weight_);
    const auto s_src = head_dot(wh, att_src_);
    const auto s_dst = head_dot(wh, att_dst_);
    const auto logits = leaky_relu(add(gather_rows(s_dst, dst), gather_rows(s_src, src)), static_cast<T>(spec_.slope));
    const auto alpha = segment_softmax(logits, dst, n);
    if (ctx.attention) ctx.attention->push_back(alpha.value());
    if (ctx.attention_dst) ctx.attention_dst->push_back(dst);
    auto out = attention_aggregate(alpha, wh, src, dst, n);
    if (spec_.combine == HeadCombine::average) out = matmul(out, average_);
    ctx.record(name, out);
    return out;
  }

  const GATLayerSpec& spec() const { return spec_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& att_src() { return att_src_; }
  Tensor<T>& att_dst() { return att_dst_; }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight_, true});
    out.push_back({prefix + ".att_src", att_src_, true});
    out.push_back({prefix + ".att_dst", att_dst_, true});
  }

 private:
  GATLayerSpec spec_;
  Tensor<T> weight_, att_src_, att_dst_;
  Tensor<T> average_;
};

}  // namespace edgegat::nn
