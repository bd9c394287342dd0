#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "edgegat/cloud.hpp"
#include "edgegat/error.hpp"

namespace edgegat::train {

/// counts[truth][prediction]
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  void add(ClassLabel truth, ClassLabel prediction) { ++counts[class_index(truth)][class_index(prediction)]; }

  void add(std::span<const ClassLabel> truth, std::span<const ClassLabel> prediction) {
    if (truth.size() != prediction.size()) {
      throw DomainError("confusion matrix: " + std::to_string(truth.size()) + " labels vs " +
                        std::to_string(prediction.size()) + " predictions");
    }
    for (std::size_t i = 0; i < truth.size(); ++i) add(truth[i], prediction[i]);
  }

  void merge(const ConfusionMatrix& other) {
    for (std::size_t t = 0; t < kNumClasses; ++t) {
      for (std::size_t p = 0; p < kNumClasses; ++p) counts[t][p] += other.counts[t][p];
    }
  }

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts) {
      for (auto c : row) n += c;
    }
    return n;
  }
};

struct MetricsReport {
  std::array<double, kNumClasses> per_class_iou{};
  std::array<double, kNumClasses> per_class_precision{};
  double miou = 0.0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double mean_loss = 0.0;
  double epoch_time = 0.0;
  unsigned absent_classes = 0;  // classes missing from both truth and prediction (IoU taken as 1)
};

/// IoU_c = TP/(TP+FP+FN) (1 when the class never occurs), accuracy = trace/N,
/// macro precision = mean_c TP/(TP+FP) (0 when the class is never predicted).
inline MetricsReport metrics_from_confusion(const ConfusionMatrix& cm, double mean_loss = 0.0) {
  const auto n = cm.total();
  if (n == 0) throw DomainError("metrics over an empty prediction set");
  MetricsReport r;
  r.mean_loss = mean_loss;
  std::uint64_t correct = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto tp = cm.counts[c][c];
    std::uint64_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += cm.counts[o][c];
      fn += cm.counts[c][o];
    }
    correct += tp;
    const auto uni = tp + fp + fn;
    if (uni == 0) {
      r.per_class_iou[c] = 1.0;
      ++r.absent_classes;
    } else {
      r.per_class_iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    }
    r.per_class_precision[c] = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  r.miou = (r.per_class_iou[0] + r.per_class_iou[1] + r.per_class_iou[2]) / 3.0;
  r.macro_precision = (r.per_class_precision[0] + r.per_class_precision[1] + r.per_class_precision[2]) / 3.0;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return r;
}

inline MetricsReport compute_metrics(std::span<const ClassLabel> truth, std::span<const ClassLabel> prediction) {
  ConfusionMatrix cm;
  cm.add(truth, prediction);
  return metrics_from_confusion(cm);
}

}  // namespace edgegat::train
