#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "edgegat/cloud.hpp"
#include "edgegat/tensor.hpp"

namespace edgegat::train {

/// Mean over rows of -log softmax(logits)[label], with max subtraction.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const ClassLabel> labels) {
  const Index n = logits.rows(), c = logits.cols();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw DomainError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                      logits.shape_string());
  }
  if (n == 0) throw DomainError("cross_entropy over zero rows");
  std::vector<Index> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y[i] = static_cast<Index>(class_index(labels[i]));
    if (y[i] >= c) throw DomainError("cross_entropy: label " + std::to_string(y[i]) + " out of range");
  }
  const auto& z = logits.value();
  Mat<T> prob(n, c);
  double total = 0.0;
  for (Index r = 0; r < n; ++r) {
    const T m = z.row(r).maxCoeff();
    prob.row(r) = (z.row(r).array() - m).exp().matrix();
    const T s = prob.row(r).sum();
    prob.row(r) /= s;
    total += static_cast<double>(std::log(s) - (z(r, y[static_cast<std::size_t>(r)]) - m));
  }
  Mat<T> out(1, 1);
  out(0, 0) = static_cast<T>(total / static_cast<double>(n));
  return make_result<T>(std::move(out), {logits}, [prob = std::move(prob), y = std::move(y)](Node<T>& self) {
    Mat<T> d = prob;
    for (std::size_t r = 0; r < y.size(); ++r) d(static_cast<Index>(r), y[r]) -= T(1);
    self.parents[0]->accumulate(d * (self.grad(0, 0) / static_cast<T>(y.size())));
  });
}

/// Row-wise argmax (ties to the lower class id).
template <typename T>
std::vector<ClassLabel> argmax_labels(const Mat<T>& logits) {
  std::vector<ClassLabel> out(static_cast<std::size_t>(logits.rows()));
  for (Index r = 0; r < logits.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = label_from_id(static_cast<int>(best));
  }
  return out;
}

}  // namespace edgegat::train
