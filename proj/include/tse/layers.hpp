// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include "tse/autograd.hpp"
#include "tse/ops.hpp"
#include "tse/random.hpp"

namespace tse {

// Named parameters and non-trainable buffers of a model. Names are the
// checkpoint keys; std::map keeps iteration order deterministic.
class ParameterSet {
 public:
  Var add(const std::string& name, Matrix init) {
    if (params_.count(name) || buffers_.count(name)) {
      throw std::logic_error("duplicate parameter name: " + name);
    }
    Var v(std::move(init), /*requires_grad=*/true);
    params_.emplace(name, v);
    return v;
  }

  std::shared_ptr<BatchNormStats> add_batch_norm_stats(const std::string& name,
                                                       Eigen::Index channels) {
    auto stats = std::make_shared<BatchNormStats>();
    stats->running_mean = RowVector::Zero(channels);
    stats->running_var = RowVector::Ones(channels);
    register_buffer(name + ".running_mean", stats, /*mean=*/true);
    register_buffer(name + ".running_var", stats, /*mean=*/false);
    return stats;
  }

  const std::map<std::string, Var>& params() const { return params_; }

  const Var& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw std::out_of_range("unknown parameter: " + name);
    }
    return it->second;
  }

  bool contains(const std::string& name) const {
    return params_.count(name) != 0;
  }

  std::size_t scalar_count() const {
    std::size_t total = 0;
    for (const auto& [_, v] : params_) {
      total += static_cast<std::size_t>(v.value().size());
    }
    return total;
  }

  void zero_grad() {
    for (auto& [_, v] : params_) v.zero_grad();
  }

  // Parameters and buffers by name.
  std::map<std::string, Matrix> state() const {
    std::map<std::string, Matrix> out;
    for (const auto& [name, v] : params_) out.emplace(name, v.value());
    for (const auto& [name, b] : buffers_) {
      out.emplace(name, b.is_mean ? Matrix(b.stats->running_mean)
                                  : Matrix(b.stats->running_var));
    }
    return out;
  }

  // Restores every parameter and buffer; names and shapes must match exactly.
  void load_state(const std::map<std::string, Matrix>& state) {
    if (state.size() != params_.size() + buffers_.size()) {
      throw std::runtime_error("state has " + std::to_string(state.size()) +
                               " entries, model expects " +
                               std::to_string(params_.size() + buffers_.size()));
    }
    for (auto& [name, v] : params_) {
      const Matrix& m = lookup(state, name, v.rows(), v.cols());
      v.mutable_value() = m;
    }
    for (auto& [name, b] : buffers_) {
      RowVector& target =
          b.is_mean ? b.stats->running_mean : b.stats->running_var;
      target = lookup(state, name, 1, target.cols()).row(0);
    }
  }

 private:
  struct Buffer {
    std::shared_ptr<BatchNormStats> stats;
    bool is_mean;
  };

  void register_buffer(const std::string& name,
                       std::shared_ptr<BatchNormStats> stats, bool mean) {
    if (params_.count(name) || buffers_.count(name)) {
      throw std::logic_error("duplicate buffer name: " + name);
    }
    buffers_.emplace(name, Buffer{std::move(stats), mean});
  }

  static const Matrix& lookup(const std::map<std::string, Matrix>& state,
                              const std::string& name, Eigen::Index rows,
                              Eigen::Index cols) {
    auto it = state.find(name);
    if (it == state.end()) {
      throw std::runtime_error("missing tensor in state: " + name);
    }
    if (it->second.rows() != rows || it->second.cols() != cols) {
      throw std::runtime_error(
          "shape mismatch for " + name + ": stored [" +
          std::to_string(it->second.rows()) + "x" +
          std::to_string(it->second.cols()) + "], expected [" +
          std::to_string(rows) + "x" + std::to_string(cols) + "]");
    }
    return it->second;
  }

  std::map<std::string, Var> params_;
  std::map<std::string, Buffer> buffers_;
};

// Training flag and randomness source threaded through forward passes.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

inline Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound,
                           Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.uniform(-bound, bound);
  }
  return m;
}

// Pointwise (kernel size 1) projection over channels.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, Eigen::Index in,
         Eigen::Index out, Rng& rng, bool bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = params.add(name + ".weight", uniform_init(in, out, bound, rng));
    if (bias) {
      bias_ = params.add(name + ".bias", uniform_init(1, out, bound, rng));
    }
  }

  Var operator()(const Var& x) const {
    Var y = matmul(x, weight_);
    return bias_.defined() ? add_row(y, bias_) : y;
  }

  Eigen::Index in_dim() const { return weight_.rows(); }
  Eigen::Index out_dim() const { return weight_.cols(); }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

  void zero() {
    weight_.mutable_value().setZero();
    if (bias_.defined()) bias_.mutable_value().setZero();
  }

 private:
  Var weight_;
  Var bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, Eigen::Index dim)
      : gamma_(params.add(name + ".gamma", Matrix::Ones(1, dim))),
        beta_(params.add(name + ".beta", Matrix::Zero(1, dim))) {}

  Var operator()(const Var& x) const { return layer_norm(x, gamma_, beta_); }
  Eigen::Index dim() const { return gamma_.cols(); }

 private:
  Var gamma_;
  Var beta_;
};

class GlobalLayerNorm {
 public:
  GlobalLayerNorm() = default;
  GlobalLayerNorm(ParameterSet& params, const std::string& name,
                  Eigen::Index dim)
      : gamma_(params.add(name + ".gamma", Matrix::Ones(1, dim))),
        beta_(params.add(name + ".beta", Matrix::Zero(1, dim))) {}

  Var operator()(const Var& x) const {
    return global_layer_norm(x, gamma_, beta_);
  }

 private:
  Var gamma_;
  Var beta_;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParameterSet& params, const std::string& name, Eigen::Index dim)
      : gamma_(params.add(name + ".gamma", Matrix::Ones(1, dim))),
        beta_(params.add(name + ".beta", Matrix::Zero(1, dim))),
        stats_(params.add_batch_norm_stats(name, dim)) {}

  Var operator()(const Var& x, const ForwardContext& ctx) const {
    return batch_norm(x, gamma_, beta_, *stats_, ctx.training);
  }

  const BatchNormStats& stats() const { return *stats_; }

 private:
  Var gamma_;
  Var beta_;
  std::shared_ptr<BatchNormStats> stats_;
};

class PReLU {
 public:
  PReLU() = default;
  PReLU(ParameterSet& params, const std::string& name)
      : slope_(params.add(name + ".slope", Matrix::Constant(1, 1, 0.25))) {}

  Var operator()(const Var& x) const { return prelu(x, slope_); }

 private:
  Var slope_;
};

class DepthwiseConv {
 public:
  DepthwiseConv() = default;
  DepthwiseConv(ParameterSet& params, const std::string& name,
                Eigen::Index channels, Eigen::Index kernel, int dilation,
                Rng& rng)
      : dilation_(dilation) {
    if (kernel % 2 == 0) {
      throw std::invalid_argument("depthwise kernel size must be odd");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(kernel));
    kernel_ = params.add(name + ".weight",
                         uniform_init(kernel, channels, bound, rng));
    bias_ = params.add(name + ".bias", uniform_init(1, channels, bound, rng));
  }

  Var operator()(const Var& x) const {
    return add_row(depthwise_conv(x, kernel_, dilation_), bias_);
  }

  Eigen::Index kernel_size() const { return kernel_.rows(); }
  Eigen::Index channels() const { return kernel_.cols(); }
  int dilation() const { return dilation_; }

 private:
  Var kernel_;
  Var bias_;
  int dilation_ = 1;
};

}  // namespace tse
