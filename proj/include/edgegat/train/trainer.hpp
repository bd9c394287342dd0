#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edgegat/train/adam.hpp"
#include "edgegat/train/checkpoint.hpp"
#include "edgegat/train/dataset.hpp"

namespace edgegat::train {

struct TrainConfig {
  double lr = 0.001;
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  std::size_t points_per_cloud = 1024;
  std::size_t k_features = 16;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t folds = 5;
  bool augment = false;      // fresh random augmentation of every training cloud each epoch
  bool time_epochs = true;   // false writes 0 seconds so curves are reproducible byte for byte

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite value >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (k_features < 3) throw ConfigError("k_features must be >= 3");
    AdamConfig{lr, adam_beta1, adam_beta2, adam_eps}.validate();
  }

  AdamConfig adam() const { return {lr, adam_beta1, adam_beta2, adam_eps}; }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_miou = 0.0;
  double val_accuracy = 0.0;
  double epoch_seconds = 0.0;
};

using ParameterSnapshot = std::vector<std::pair<std::string, Mat<float>>>;

inline ParameterSnapshot snapshot(const nn::Model<float>& model) {
  ParameterSnapshot out;
  for (const auto& p : model.parameters()) out.emplace_back(p.name, p.tensor.value());
  return out;
}

inline void restore(nn::Model<float>& model, const ParameterSnapshot& snap) {
  auto params = model.parameters();
  if (params.size() != snap.size()) throw DomainError("snapshot does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor.mutable_value() = snap[i].second;
}

struct TrainOutputs {
  std::filesystem::path curves_csv;   // empty: not written
  std::filesystem::path checkpoint;   // empty: not written
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::unique_ptr<nn::Model<float>> model;  // holds the best-epoch parameters
  std::vector<EpochRecord> curves;
  std::size_t best_epoch = 0;
  MetricsReport best;   // validation metrics at best_epoch
  MetricsReport last;   // validation metrics after the final epoch
};

namespace detail {

inline std::string csv_number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline const char* kCurvesHeader = "epoch,train_loss,val_loss,val_miou,val_accuracy,epoch_seconds";

inline std::string format_curve_row(const EpochRecord& r) {
  return std::to_string(r.epoch) + "," + detail::csv_number(r.train_loss) + "," + detail::csv_number(r.val_loss) +
         "," + detail::csv_number(r.val_miou) + "," + detail::csv_number(r.val_accuracy) + "," +
         detail::csv_number(r.epoch_seconds);
}

inline void write_curves_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& curves) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << kCurvesHeader << '\n';
  for (const auto& r : curves) out << format_curve_row(r) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

/// Re-draws an augmented copy of a prepared sample.
inline Sample augment_sample(const Sample& s, std::uint64_t seed, std::size_t k_features, std::size_t k_graph,
                             FeatureSet fs) {
  LabeledCloud lc{s.cloud, s.labels};
  const auto aug = augment(lc, default_augment_params(s.cloud, seed));
  SampleOptions opt;
  opt.points = 0;
  opt.k_features = k_features;
  opt.k_graph = k_graph;
  opt.feature_set = fs;
  return prepare_sample(aug, opt);
}

/// Adam on cross-entropy over shuffled batches of disjoint-union graphs. After
/// every epoch the model is evaluated on `val` (or on `train` when `val` is
/// empty); the best validation mIoU selects the returned parameters.
inline TrainResult train_loop(const nn::ModelConfig& model_config, const TrainConfig& config,
                              std::span<const Sample> train, std::span<const Sample> val,
                              const TrainOutputs& outputs = {}) {
  config.validate();
  model_config.validate();
  if (train.empty()) throw DomainError("training set is empty");
  for (const auto& s : train) {
    if (s.labels.empty()) throw DomainError("training clouds must be labeled");
    if (s.features.cols() != model_config.input_width()) {
      throw DomainError("sample feature width " + std::to_string(s.features.cols()) + " does not match the model");
    }
  }
  const auto eval_set = val.empty() ? train : val;

  TrainResult result;
  result.model = nn::make_model<float>(model_config, config.seed);
  auto& model = *result.model;
  Adam<float> opt(model.parameters(), config.adam());
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  std::ofstream curves;
  if (!outputs.curves_csv.empty()) {
    curves.open(outputs.curves_csv, std::ios::trunc);
    if (!curves) throw IoError("cannot open '" + outputs.curves_csv.string() + "' for writing");
    curves << kCurvesHeader << '\n';
  }

  ParameterSnapshot best_params;
  double best_miou = -1.0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> augmented;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    if (config.augment) {
      augmented.clear();
      for (std::size_t i = 0; i < train.size(); ++i) {
        augmented.push_back(augment_sample(train[i], rng(), config.k_features, model_config.k_graph,
                                           model_config.feature_set));
      }
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<const Sample*> members;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) {
        members.push_back(config.augment ? &augmented[order[i]] : &train[order[i]]);
      }
      const auto batch = make_batch(members);
      nn::ForwardContext<float> ctx;
      ctx.training = true;
      ctx.rng = &rng;
      const auto logits = model.forward(Tensor<float>(batch.features), batch.graph, ctx);
      const auto loss = cross_entropy(logits, std::span<const ClassLabel>(batch.labels));
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) {
        throw DivergenceError("loss became " + std::string(std::isnan(lv) ? "NaN" : "infinite") + " at epoch " +
                              std::to_string(epoch) + ", batch " + std::to_string(batches + 1));
      }
      backward(loss);
      opt.step();
      opt.zero_grad();
      loss_sum += lv;
      ++batches;
    }
    const auto report = evaluate(model, eval_set);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val_loss = report.mean_loss;
    rec.val_miou = report.miou;
    rec.val_accuracy = report.accuracy;
    rec.epoch_seconds = config.time_epochs ? secs : 0.0;
    result.curves.push_back(rec);
    if (curves.is_open()) curves << format_curve_row(rec) << '\n' << std::flush;
    if (outputs.log) {
      *outputs.log << "epoch " << epoch << "/" << config.epochs << " train_loss " << rec.train_loss << " val_loss "
                   << rec.val_loss << " val_miou " << rec.val_miou << " val_accuracy " << rec.val_accuracy << '\n';
    }

    result.last = report;
    result.last.epoch_time = secs;
    if (report.miou > best_miou) {
      best_miou = report.miou;
      best_params = snapshot(model);
      result.best_epoch = epoch;
      result.best = result.last;
    }
  }
  if (curves.is_open() && !curves) throw IoError("write to '" + outputs.curves_csv.string() + "' failed");
  restore(model, best_params);
  if (!outputs.checkpoint.empty()) save_checkpoint(outputs.checkpoint, model, config.seed);
  return result;
}

}  // namespace edgegat::train
