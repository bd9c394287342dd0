#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "edgegat/cloud.hpp"
#include "edgegat/geomfeat.hpp"
#include "edgegat/graph.hpp"
#include "edgegat/nn/models.hpp"
#include "edgegat/train/loss.hpp"
#include "edgegat/train/metrics.hpp"

namespace edgegat::train {

struct SampleOptions {
  std::size_t points = 1024;  // downsample target, 0 keeps every point
  std::size_t k_features = 16;
  std::size_t k_graph = 16;
  FeatureSet feature_set = FeatureSet::xyz_nclpsoae;
  std::uint64_t seed = 0;  // downsampling seed
};

/// One cloud ready for the network: normalized, featurized, with its KNN graph.
struct Sample {
  std::shared_ptr<const nn::GraphInput> graph;
  Mat<float> features;
  std::vector<ClassLabel> labels;  // empty when unlabeled
  PointCloud cloud;                // normalized coordinates
};

inline Sample prepare_sample(const LabeledCloud& input, const SampleOptions& opt) {
  input.validate();
  const LabeledCloud sub = opt.points ? downsample(input, opt.points, opt.seed) : input;
  Sample s;
  s.cloud = normalize_cloud(sub.cloud);
  s.features = select_features(featurize(s.cloud, opt.k_features), opt.feature_set).cast<float>();
  s.graph = std::make_shared<const nn::GraphInput>(knn_graph(s.cloud, opt.k_graph));
  if (sub.labels) s.labels = *sub.labels;
  return s;
}

inline std::vector<Sample> prepare_samples(const std::vector<LabeledCloud>& clouds, const SampleOptions& opt) {
  std::vector<Sample> out;
  out.reserve(clouds.size());
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    SampleOptions o = opt;
    o.seed = opt.seed + i;
    out.push_back(prepare_sample(clouds[i], o));
  }
  return out;
}

/// Disjoint union of several samples.
struct Batch {
  nn::GraphInput graph;
  Mat<float> features;
  std::vector<ClassLabel> labels;
};

inline Batch make_batch(std::span<const Sample* const> samples) {
  if (samples.empty()) throw DomainError("empty batch");
  if (samples.size() == 1) {
    return {nn::GraphInput(samples[0]->graph->topology), samples[0]->features, samples[0]->labels};
  }
  std::vector<std::pair<GraphTopology, Mat<float>>> parts;
  parts.reserve(samples.size());
  std::vector<ClassLabel> labels;
  for (const auto* s : samples) {
    parts.emplace_back(s->graph->topology, s->features);
    labels.insert(labels.end(), s->labels.begin(), s->labels.end());
  }
  auto [g, f] = batch_graphs(parts);
  return {nn::GraphInput(std::move(g)), std::move(f), std::move(labels)};
}

/// Eval-mode logits for one sample.
inline Mat<float> predict_logits(const nn::Model<float>& model, const Sample& s) {
  NoGradGuard guard;
  nn::ForwardContext<float> ctx;
  return model.forward(Tensor<float>(s.features), *s.graph, ctx).value();
}

/// Per-cloud evaluation with dropout off; metrics pooled over all points,
/// mean_loss averaged over points.
inline MetricsReport evaluate(const nn::Model<float>& model, std::span<const Sample> samples) {
  if (samples.empty()) throw DomainError("evaluate needs at least one cloud");
  ConfusionMatrix cm;
  double loss_sum = 0.0;
  std::size_t points = 0;
  for (const auto& s : samples) {
    if (s.labels.empty()) throw DomainError("evaluate needs labeled clouds");
    NoGradGuard guard;
    nn::ForwardContext<float> ctx;
    const auto logits = model.forward(Tensor<float>(s.features), *s.graph, ctx);
    const auto loss = cross_entropy(logits, std::span<const ClassLabel>(s.labels)).item();
    loss_sum += static_cast<double>(loss) * static_cast<double>(s.labels.size());
    points += s.labels.size();
    cm.add(s.labels, argmax_labels(logits.value()));
  }
  return metrics_from_confusion(cm, loss_sum / static_cast<double>(points));
}

}  // namespace edgegat::train
