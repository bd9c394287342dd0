#pragma once

#include <cmath>
#include <random>
#include <string>

#include "edgegat/nn/module.hpp"
#include "edgegat/tensor.hpp"

namespace edgegat::nn {

/// y = x W + b with W of shape in x out.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(Index in, Index out, bool bias, std::mt19937_64& rng)
      : weight_(glorot_uniform<T>(in, out, in, out, rng), true), has_bias_(bias) {
    if (bias) bias_ = Tensor<T>::zeros(1, out, true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = matmul(x, weight_);
    return has_bias_ ? add_bias(y, bias_) : y;
  }

  Index in_features() const { return weight_.rows(); }
  Index out_features() const { return weight_.cols(); }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  const Tensor<T>& weight() const { return weight_; }
  const Tensor<T>& bias() const { return bias_; }
  bool has_bias() const { return has_bias_; }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight_, true});
    if (has_bias_) out.push_back({prefix + ".bias", bias_, true});
  }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
  bool has_bias_ = false;
};

/// Inverted dropout: kept entries are scaled by 1/(1-p). Identity when not training.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, const ForwardContext<T>& ctx) {
  if (!ctx.training || p <= 0.0) return x;
  if (!ctx.rng) throw DomainError("dropout in training mode needs an RNG");
  std::bernoulli_distribution keep(1.0 - p);
  const T s = static_cast<T>(1.0 / (1.0 - p));
  Mat<T> mask(x.rows(), x.cols());
  for (Index r = 0; r < mask.rows(); ++r) {
    for (Index c = 0; c < mask.cols(); ++c) mask(r, c) = keep(*ctx.rng) ? s : T(0);
  }
  Mat<T> out = x.value().cwiseProduct(mask);
  return make_result<T>(std::move(out), {x}, [mask = std::move(mask)](Node<T>& self) {
    self.parents[0]->accumulate(self.grad.cwiseProduct(mask));
  });
}

/// Per-column normalization over rows. Training uses batch statistics (biased
/// variance) and updates running estimates (unbiased variance); evaluation uses
/// the running estimates.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(Index dim, double momentum = 0.1, double eps = 1e-5)
      : gamma_(Mat<T>::Ones(1, dim), true),
        beta_(Mat<T>::Zero(1, dim), true),
        running_mean_(Mat<T>::Zero(1, dim)),
        running_var_(Mat<T>::Ones(1, dim)),
        momentum_(momentum),
        eps_(eps) {}

  Tensor<T> operator()(const Tensor<T>& x, const ForwardContext<T>& ctx) const {
    const Index d = gamma_.cols();
    if (x.cols() != d) throw DomainError("batch_norm: shape mismatch " + x.shape_string() + " vs width " + std::to_string(d));
    const Index m = x.rows();
    Mat<T> mean_row(1, d), inv_std(1, d);
    if (ctx.training) {
      if (m == 0) throw DomainError("batch_norm over zero rows");
      mean_row = x.value().colwise().mean();
      Mat<T> centered = x.value().rowwise() - mean_row.row(0);
      Mat<T> var = centered.cwiseAbs2().colwise().mean();
      inv_std = (var.array() + static_cast<T>(eps_)).rsqrt().matrix();
      const T mom = static_cast<T>(momentum_);
      const T unbias = m > 1 ? static_cast<T>(m) / static_cast<T>(m - 1) : T(1);
      auto& rm = running_mean_.mutable_value();
      auto& rv = running_var_.mutable_value();
      rm = (T(1) - mom) * rm + mom * mean_row;
      rv = (T(1) - mom) * rv + mom * unbias * var;
    } else {
      mean_row = running_mean_.value();
      inv_std = (running_var_.value().array() + static_cast<T>(eps_)).rsqrt().matrix();
    }
    Mat<T> xhat = (x.value().rowwise() - mean_row.row(0)).array().rowwise() * inv_std.row(0).array();
    Mat<T> out = (xhat.array().rowwise() * gamma_.value().row(0).array()).rowwise() + beta_.value().row(0).array();
    const bool batch_stats = ctx.training;
    return make_result<T>(std::move(out), {x, gamma_, beta_},
                          [xhat = std::move(xhat), inv_std = std::move(inv_std), batch_stats](Node<T>& self) {
      auto& px = self.parents[0];
      auto& pg = self.parents[1];
      auto& pb = self.parents[2];
      const auto& g = self.grad;
      if (pb->requires_grad) pb->accumulate(g.colwise().sum());
      if (pg->requires_grad) pg->accumulate(g.cwiseProduct(xhat).colwise().sum());
      if (!px->requires_grad) return;
      Mat<T> gy = g.array().rowwise() * pg->value.row(0).array();  // dL/dxhat
      if (batch_stats) {
        const T inv_m = T(1) / static_cast<T>(g.rows());
        Mat<T> mean_gy = gy.colwise().sum() * inv_m;
        Mat<T> mean_gy_xhat = gy.cwiseProduct(xhat).colwise().sum() * inv_m;
        Mat<T> dx = (gy.rowwise() - mean_gy.row(0)) - (xhat.array().rowwise() * mean_gy_xhat.row(0).array()).matrix();
        px->accumulate((dx.array().rowwise() * inv_std.row(0).array()).matrix());
      } else {
        px->accumulate((gy.array().rowwise() * inv_std.row(0).array()).matrix());
      }
    });
  }

  Index dim() const { return gamma_.cols(); }
  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".gamma", gamma_, true});
    out.push_back({prefix + ".beta", beta_, true});
    out.push_back({prefix + ".running_mean", running_mean_, false});
    out.push_back({prefix + ".running_var", running_var_, false});
  }

 private:
  Tensor<T> gamma_, beta_;
  mutable Tensor<T> running_mean_, running_var_;
  double momentum_ = 0.1;
  double eps_ = 1e-5;
};

struct ResidualMLPSpec {
  Index d_in = 1, d_hidden = 1, d_out = 1;
  double dropout_p = 0.2;
  double slope = 0.2;

  void validate() const {
    if (d_in < 1 || d_hidden < 1 || d_out < 1) throw DomainError("residual MLP widths must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw DomainError("dropout probability must lie in [0, 1)");
  }
};

/// y = F(x) + S(x), F = Linear -> BatchNorm -> LeakyReLU -> Dropout -> Linear,
/// S = identity when d_in == d_out, else a bias-free linear projection.
template <typename T>
class ResidualMLP {
 public:
  ResidualMLP() = default;
  ResidualMLP(const ResidualMLPSpec& spec, std::mt19937_64& rng)
      : spec_((spec.validate(), spec)),
        fc1_(spec.d_in, spec.d_hidden, true, rng),
        bn_(spec.d_hidden),
        fc2_(spec.d_hidden, spec.d_out, true, rng) {
    if (spec.d_in != spec.d_out) skip_ = Linear<T>(spec.d_in, spec.d_out, false, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x, const ForwardContext<T>& ctx, const std::string& name = "mlp") const {
    auto h = fc1_(x);
    ctx.record(name + ".hidden", h);
    h = bn_(h, ctx);
    h = leaky_relu(h, static_cast<T>(spec_.slope));
    h = dropout(h, spec_.dropout_p, ctx);
    auto f = fc2_(h);
    ctx.record(name + ".out", f);
    return add(f, has_projection() ? skip_(x) : x);
  }

  const ResidualMLPSpec& spec() const { return spec_; }
  bool has_projection() const { return spec_.d_in != spec_.d_out; }
  Linear<T>& fc1() { return fc1_; }
  Linear<T>& fc2() { return fc2_; }
  Linear<T>& skip() { return skip_; }
  BatchNorm<T>& bn() { return bn_; }
  const Linear<T>& fc1() const { return fc1_; }
  const Linear<T>& fc2() const { return fc2_; }
  const Linear<T>& skip() const { return skip_; }
  const BatchNorm<T>& bn() const { return bn_; }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    fc1_.collect(out, prefix + ".fc1");
    bn_.collect(out, prefix + ".bn");
    fc2_.collect(out, prefix + ".fc2");
    if (has_projection()) skip_.collect(out, prefix + ".skip");
  }

 private:
  ResidualMLPSpec spec_;
  Linear<T> fc1_;
  BatchNorm<T> bn_;
  Linear<T> fc2_;
  Linear<T> skip_;
};

}  // namespace edgegat::nn
