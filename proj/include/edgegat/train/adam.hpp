#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "edgegat/nn/module.hpp"

namespace edgegat::train {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be > 0");
  }
};

/// Bias-corrected Adam over the trainable entries of a parameter list.
template <typename T>
class Adam {
 public:
  Adam(const nn::ParameterList<T>& params, AdamConfig config) : config_(config) {
    config_.validate();
    for (const auto& p : params) {
      if (!p.trainable) continue;
      params_.push_back(p);
      m_.push_back(Mat<T>::Zero(p.tensor.rows(), p.tensor.cols()));
      v_.push_back(Mat<T>::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }

  /// One update from the accumulated gradients. Every trainable parameter must
  /// have received a gradient.
  void step() {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) throw DomainError("adam_step: parameter '" + p.name + "' has no gradient");
    }
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& value = params_[i].tensor.mutable_value();
      const auto& g = params_[i].tensor.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (Index k = 0; k < value.size(); ++k) {
        const double gk = static_cast<double>(g.data()[k]);
        const double mk = b1 * static_cast<double>(m.data()[k]) + (1.0 - b1) * gk;
        const double vk = b2 * static_cast<double>(v.data()[k]) + (1.0 - b2) * gk * gk;
        m.data()[k] = static_cast<T>(mk);
        v.data()[k] = static_cast<T>(vk);
        const double update = config_.lr * (mk / c1) / (std::sqrt(vk / c2) + config_.eps);
        value.data()[k] = static_cast<T>(static_cast<double>(value.data()[k]) - update);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  std::size_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<Mat<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Mat<T>>& second_moments() const noexcept { return v_; }

 private:
  AdamConfig config_;
  nn::ParameterList<T> params_;
  std::vector<Mat<T>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace edgegat::train
