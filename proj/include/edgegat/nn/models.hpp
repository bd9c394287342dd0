#pragma once

#include <memory>
#include <random>
#include <string>
#include <string_view>

#include "edgegat/geomfeat.hpp"
#include "edgegat/nn/edgeconv.hpp"
#include "edgegat/nn/gat.hpp"
#include "edgegat/nn/gcn.hpp"
#include "edgegat/nn/layers.hpp"

namespace edgegat::nn {

enum class Architecture { edgegat, gcn, gat, gcn_unet, gcn_unet2, pointnet };

inline constexpr Architecture kAllArchitectures[] = {Architecture::edgegat,  Architecture::gcn,
                                                     Architecture::gat,      Architecture::gcn_unet,
                                                     Architecture::gcn_unet2, Architecture::pointnet};

constexpr std::string_view architecture_name(Architecture a) noexcept {
  switch (a) {
    case Architecture::edgegat: return "edgegat";
    case Architecture::gcn: return "gcn";
    case Architecture::gat: return "gat";
    case Architecture::gcn_unet: return "gcn_unet";
    case Architecture::gcn_unet2: return "gcn_unet2";
    case Architecture::pointnet: return "pointnet";
  }
  return "?";
}

inline Architecture parse_architecture(std::string_view s) {
  for (auto a : kAllArchitectures) {
    if (architecture_name(a) == s) return a;
  }
  throw ConfigError("unknown architecture '" + std::string(s) +
                    "' (expected edgegat, gcn, gat, gcn_unet, gcn_unet2 or pointnet)");
}

struct ModelConfig {
  Architecture architecture = Architecture::edgegat;
  std::size_t k_graph = 16;
  FeatureSet feature_set = FeatureSet::xyz_nclpsoae;
  Index num_classes = 3;
  double dropout = 0.2;
  double slope = 0.2;
  bool dynamic_knn = false;

  // edgegat
  Index edge_hidden = 32;
  Index edge_out = 64;
  Index gat_width = 64;  // per head
  Index gat_heads = 4;
  // baselines
  Index hidden = 64;
  double pool_ratio = 0.5;
  Index pointnet_local = 64;
  Index pointnet_global = 128;

  Index input_width() const { return static_cast<Index>(feature_width(feature_set)); }

  void validate() const {
    if (k_graph < 1) throw ConfigError("k_graph must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(pool_ratio > 0.0 && pool_ratio <= 1.0)) throw ConfigError("pool_ratio must lie in (0, 1]");
    if (edge_hidden < 1 || edge_out < 1 || gat_width < 1 || gat_heads < 1 || hidden < 1 || pointnet_local < 1 ||
        pointnet_global < 1) {
      throw ConfigError("layer widths must be >= 1");
    }
  }
};

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& config) : config_(config) {}
  virtual ~Model() = default;

  /// N x num_classes logits for the vertices of `graph`.
  virtual Tensor<T> forward(const Tensor<T>& x, const GraphInput& graph, const ForwardContext<T>& ctx) const = 0;

  ParameterList<T> parameters() const {
    ParameterList<T> out;
    collect(out);
    return out;
  }

  const ModelConfig& config() const { return config_; }

 protected:
  virtual void collect(ParameterList<T>& out) const = 0;

  void check_input(const Tensor<T>& x, const GraphInput& graph) const {
    if (x.cols() != config_.input_width()) {
      throw DomainError(std::string(architecture_name(config_.architecture)) + ": input width " +
                        std::to_string(x.cols()) + " does not match feature set " +
                        std::string(feature_set_name(config_.feature_set)) + " (" +
                        std::to_string(config_.input_width()) + ")");
    }
    if (static_cast<std::size_t>(x.rows()) != graph.topology.num_vertices) {
      throw DomainError("input rows " + std::to_string(x.rows()) + " differ from vertex count " +
                        std::to_string(graph.topology.num_vertices));
    }
  }

  ModelConfig config_;
};

/// Two EdgeConv blocks, concat with the input, two attention layers, linear head.
template <typename T>
class EdgeGAT final : public Model<T> {
 public:
  EdgeGAT(const ModelConfig& c, std::mt19937_64& rng) : Model<T>(c) {
    const Index d = c.input_width();
    EdgeConvSpec s1;
    s1.mlp = {2 * d, c.edge_hidden, c.edge_out, c.dropout, c.slope};
    s1.aggregation = Aggregation::sum;
    s1.dynamic_knn = c.dynamic_knn;
    s1.dynamic_k = c.k_graph;
    EdgeConvSpec s2 = s1;
    s2.mlp = {2 * c.edge_out, c.edge_hidden, c.edge_out, c.dropout, c.slope};
    s2.aggregation = Aggregation::mean;
    ec1_ = EdgeConv<T>(s1, rng);
    ec2_ = EdgeConv<T>(s2, rng);
    gat1_ = GATLayer<T>({d + c.edge_out, c.gat_width, c.gat_heads, HeadCombine::concat, c.slope}, rng);
    gat2_ = GATLayer<T>({c.gat_heads * c.gat_width, c.gat_width, c.gat_heads, HeadCombine::average, c.slope}, rng);
    head_ = Linear<T>(c.gat_width, c.num_classes, true, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, const GraphInput& graph, const ForwardContext<T>& ctx) const override {
    this->check_input(x, graph);
    const auto& c = this->config_;
    ctx.record("input", x);
    const auto h1 = ec1_(x, graph, ctx, "edgeconv1");
    const auto h2 = ec2_(h1, graph, ctx, "edgeconv2");
    const auto cat = concat<T>({x, h2}, 1);
    ctx.record("concat", cat);
    auto g1 = gat1_(cat, graph, ctx, "gat1");
    g1 = dropout(leaky_relu(g1, static_cast<T>(c.slope)), c.dropout, ctx);
    auto g2 = gat2_(g1, graph, ctx, "gat2");
    g2 = dropout(leaky_relu(g2, static_cast<T>(c.slope)), c.dropout, ctx);
    auto logits = head_(g2);
    ctx.record("logits", logits);
    return logits;
  }

 protected:
  void collect(ParameterList<T>& out) const override {
    ec1_.collect(out, "edgeconv1");
    ec2_.collect(out, "edgeconv2");
    gat1_.collect(out, "gat1");
    gat2_.collect(out, "gat2");
    head_.collect(out, "head");
  }

 private:
  EdgeConv<T> ec1_, ec2_;
  GATLayer<T> gat1_, gat2_;
  Linear<T> head_;
};

/// GCN -> ReLU -> Dropout, twice, then a GCN layer producing logits.
template <typename T>
class SimpleGCN final : public Model<T> {
 public:
  SimpleGCN(const ModelConfig& c, std::mt19937_64& rng) : Model<T>(c) {
    l1_ = GCNConv<T>(c.input_width(), c.hidden, rng);
    l2_ = GCNConv<T>(c.hidden, c.hidden, rng);
    l3_ = GCNConv<T>(c.hidden, c.num_classes, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, const GraphInput& graph, const ForwardContext<T>& ctx) const override {
    this->check_input(x, graph);
    const double p = this->config_.dropout;
    auto h = dropout(relu(l1_(x, graph)), p, ctx);
    ctx.record("gcn1", h);
    h = dropout(relu(l2_(h, graph)), p, ctx);
    ctx.record("gcn2", h);
    auto logits = l3_(h, graph);
    ctx.record("logits", logits);
    return logits;
  }

 protected:
  void collect(ParameterList<T>& out) const override {
    l1_.collect(out, "gcn1");
    l2_.collect(out, "gcn2");
    l3_.collect(out, "gcn3");
  }

 private:
  GCNConv<T> l1_, l2_, l3_;
};

/// (GAT -> BatchNorm -> LeakyReLU -> Dropout) x 2, linear head.
template <typename T>
class GATNet final : public Model<T> {
 public:
  GATNet(const ModelConfig& c, std::mt19937_64& rng) : Model<T>(c) {
    gat1_ = GATLayer<T>({c.input_width(), c.gat_width, c.gat_heads, HeadCombine::concat, c.slope}, rng);
    bn1_ = BatchNorm<T>(c.gat_heads * c.gat_width);
    gat2_ = GATLayer<T>({c.gat_heads * c.gat_width, c.gat_width, c.gat_heads, HeadCombine::average, c.slope}, rng);
    bn2_ = BatchNorm<T>(c.gat_width);
    head_ = Linear<T>(c.gat_width, c.num_classes, true, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, const GraphInput& graph, const ForwardContext<T>& ctx) const override {
    this->check_input(x, graph);
    const auto& c = this->config_;
    auto h = gat1_(x, graph, ctx, "gat1");
    h = dropout(leaky_relu(bn1_(h, ctx), static_cast<T>(c.slope)), c.dropout, ctx);
    h = gat2_(h, graph, ctx, "gat2");
    h = dropout(leaky_relu(bn2_(h, ctx), static_cast<T>(c.slope)), c.dropout, ctx);
    auto logits = head_(h);
    ctx.record("logits", logits);
    return logits;
  }

 protected:
  void collect(ParameterList<T>& out) const override {
    gat1_.collect(out, "gat1");
    bn1_.collect(out, "bn1");
    gat2_.collect(out, "gat2");
    bn2_.collect(out, "bn2");
    head_.collect(out, "head");
  }

 private:
  GATLayer<T> gat1_, gat2_;
  BatchNorm<T> bn1_, bn2_;
  Linear<T> head_;
};

/// Depth-2 graph U-Net: GCN encoder with top-k pooling, unpooling decoder with
/// additive skips. The normalized variant puts BatchNorm + Dropout after every
/// hidden GCN layer.
template <typename T>
class GCNUNet final : public Model<T> {
 public:
  GCNUNet(const ModelConfig& c, std::mt19937_64& rng, bool normalized) : Model<T>(c), normalized_(normalized) {
    const Index w = c.hidden;
    enc0_ = GCNConv<T>(c.input_width(), w, rng);
    pool1_ = TopKPool<T>(w, c.pool_ratio, rng);
    enc1_ = GCNConv<T>(w, w, rng);
    pool2_ = TopKPool<T>(w, c.pool_ratio, rng);
    bottom_ = GCNConv<T>(w, w, rng);
    dec1_ = GCNConv<T>(w, w, rng);
    out_ = GCNConv<T>(w, c.num_classes, rng);
    if (normalized_) {
      for (auto& bn : bns_) bn = BatchNorm<T>(w);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, const GraphInput& graph, const ForwardContext<T>& ctx) const override {
    this->check_input(x, graph);
    const auto x0 = block(enc0_(x, graph), 0, ctx);
    ctx.record("enc0", x0);
    auto p1 = pool1_(x0, graph);
    const auto x1 = block(enc1_(p1.h, p1.graph), 1, ctx);
    ctx.record("enc1", x1);
    auto p2 = pool2_(x1, p1.graph);
    const auto x2 = block(bottom_(p2.h, p2.graph), 2, ctx);
    ctx.record("bottom", x2);
    const auto u1 = unpool(x2, p2.info, x1);
    const auto d1 = block(dec1_(u1, p1.graph), 3, ctx);
    ctx.record("dec1", d1);
    const auto u0 = unpool(d1, p1.info, x0);
    auto logits = out_(u0, graph);
    ctx.record("logits", logits);
    return logits;
  }

 protected:
  void collect(ParameterList<T>& out) const override {
    enc0_.collect(out, "enc0");
    pool1_.collect(out, "pool1");
    enc1_.collect(out, "enc1");
    pool2_.collect(out, "pool2");
    bottom_.collect(out, "bottom");
    dec1_.collect(out, "dec1");
    out_.collect(out, "out");
    if (normalized_) {
      for (std::size_t i = 0; i < 4; ++i) bns_[i].collect(out, "bn" + std::to_string(i));
    }
  }

 private:
  Tensor<T> block(const Tensor<T>& h, std::size_t i, const ForwardContext<T>& ctx) const {
    if (!normalized_) return relu(h);
    return dropout(relu(bns_[i](h, ctx)), this->config_.dropout, ctx);
  }

  bool normalized_ = false;
  GCNConv<T> enc0_, enc1_, bottom_, dec1_, out_;
  TopKPool<T> pool1_, pool2_;
  BatchNorm<T> bns_[4];
};

/// Shared per-point MLP, global max per cloud, global feature concatenated back
/// to the per-point features, MLP head. No input transform network.
template <typename T>
class PointNet final : public Model<T> {
 public:
  PointNet(const ModelConfig& c, std::mt19937_64& rng) : Model<T>(c) {
    fc1_ = Linear<T>(c.input_width(), c.pointnet_local, true, rng);
    bn1_ = BatchNorm<T>(c.pointnet_local);
    fc2_ = Linear<T>(c.pointnet_local, c.pointnet_global, true, rng);
    bn2_ = BatchNorm<T>(c.pointnet_global);
    fc3_ = Linear<T>(c.pointnet_local + c.pointnet_global, c.hidden, true, rng);
    bn3_ = BatchNorm<T>(c.hidden);
    head_ = Linear<T>(c.hidden, c.num_classes, true, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, const GraphInput& graph, const ForwardContext<T>& ctx) const override {
    this->check_input(x, graph);
    const auto& batch = graph.topology.batch;
    const auto local = relu(bn1_(fc1_(x), ctx));
    const auto feat = relu(bn2_(fc2_(local), ctx));
    const auto global = scatter_aggregate(feat, batch, graph.topology.num_graphs(), Aggregation::max);
    ctx.record("global", global);
    const auto cat = concat<T>({local, gather_rows(global, batch)}, 1);
    ctx.record("concat", cat);
    auto h = dropout(relu(bn3_(fc3_(cat), ctx)), this->config_.dropout, ctx);
    auto logits = head_(h);
    ctx.record("logits", logits);
    return logits;
  }

 protected:
  void collect(ParameterList<T>& out) const override {
    fc1_.collect(out, "fc1");
    bn1_.collect(out, "bn1");
    fc2_.collect(out, "fc2");
    bn2_.collect(out, "bn2");
    fc3_.collect(out, "fc3");
    bn3_.collect(out, "bn3");
    head_.collect(out, "head");
  }

 private:
  Linear<T> fc1_, fc2_, fc3_, head_;
  BatchNorm<T> bn1_, bn2_, bn3_;
};

template <typename T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  switch (config.architecture) {
    case Architecture::edgegat: return std::make_unique<EdgeGAT<T>>(config, rng);
    case Architecture::gcn: return std::make_unique<SimpleGCN<T>>(config, rng);
    case Architecture::gat: return std::make_unique<GATNet<T>>(config, rng);
    case Architecture::gcn_unet: return std::make_unique<GCNUNet<T>>(config, rng, false);
    case Architecture::gcn_unet2: return std::make_unique<GCNUNet<T>>(config, rng, true);
    case Architecture::pointnet: return std::make_unique<PointNet<T>>(config, rng);
  }
  throw ConfigError("unknown architecture");
}

}  // namespace edgegat::nn
