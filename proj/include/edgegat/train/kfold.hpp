#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "edgegat/train/trainer.hpp"

namespace edgegat::train {

/// Seeded shuffle dealt round-robin into `folds` subsets (sizes differ by at
/// most one). Each subset is sorted ascending.
inline std::vector<std::vector<std::size_t>> partition_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw DomainError("need at least 2 folds");
  if (n < folds) {
    throw DomainError("dataset of " + std::to_string(n) + " clouds is smaller than " + std::to_string(folds) +
                      " folds");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t i = 0; i < n; ++i) out[i % folds].push_back(idx[i]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

struct FoldResult {
  std::vector<std::size_t> validation;
  std::size_t best_epoch = 0;
  MetricsReport best;
  MetricsReport last;
};

struct KFoldResult {
  std::vector<FoldResult> folds;
  MetricsReport best;  // fold average of best-epoch metrics
  MetricsReport last;  // fold average of final-epoch metrics
};

/// Field-wise arithmetic mean.
inline MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw DomainError("no reports to average");
  MetricsReport a;
  for (const auto& r : reports) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      a.per_class_iou[c] += r.per_class_iou[c];
      a.per_class_precision[c] += r.per_class_precision[c];
    }
    a.miou += r.miou;
    a.accuracy += r.accuracy;
    a.macro_precision += r.macro_precision;
    a.mean_loss += r.mean_loss;
    a.epoch_time += r.epoch_time;
    a.absent_classes += r.absent_classes;
  }
  const double k = static_cast<double>(reports.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    a.per_class_iou[c] /= k;
    a.per_class_precision[c] /= k;
  }
  a.miou /= k;
  a.accuracy /= k;
  a.macro_precision /= k;
  a.mean_loss /= k;
  a.epoch_time /= k;
  return a;
}

struct KFoldOutputs {
  std::filesystem::path directory;  // empty: nothing written; else fold<i>.csv curves and fold<i>.ckpt
  std::ostream* log = nullptr;
};

inline KFoldResult kfold_run(std::span<const Sample> dataset, const nn::ModelConfig& model_config,
                             const TrainConfig& config, const KFoldOutputs& outputs = {}) {
  config.validate();
  const auto parts = partition_folds(dataset.size(), config.folds, config.seed);
  if (!outputs.directory.empty()) std::filesystem::create_directories(outputs.directory);
  KFoldResult result;
  std::vector<MetricsReport> best, last;
  for (std::size_t f = 0; f < parts.size(); ++f) {
    std::vector<Sample> train, val;
    std::vector<bool> held(dataset.size(), false);
    for (auto i : parts[f]) held[i] = true;
    for (std::size_t i = 0; i < dataset.size(); ++i) (held[i] ? val : train).push_back(dataset[i]);
    TrainOutputs out;
    out.log = outputs.log;
    if (!outputs.directory.empty()) {
      out.curves_csv = outputs.directory / ("fold" + std::to_string(f + 1) + ".csv");
      out.checkpoint = outputs.directory / ("fold" + std::to_string(f + 1) + ".ckpt");
    }
    if (outputs.log) *outputs.log << "fold " << f + 1 << "/" << parts.size() << '\n';
    auto r = train_loop(model_config, config, train, val, out);
    result.folds.push_back({parts[f], r.best_epoch, r.best, r.last});
    best.push_back(r.best);
    last.push_back(r.last);
  }
  result.best = average_reports(best);
  result.last = average_reports(last);
  return result;
}

}  // namespace edgegat::train
