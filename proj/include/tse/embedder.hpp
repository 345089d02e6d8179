// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// ResNet speaker embedder and the speaker-classification head.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tse/json_util.hpp"
#include "tse/layers.hpp"
#include "tse/ops.hpp"

namespace tse {

inline constexpr int kEmbeddingDim = 256;

struct EmbedderConfig {
  std::vector<std::pair<int, int>> block_dims{{256, 256}, {256, 512}, {512, 512}};
  int embedding_dim = kEmbeddingDim;
  int pool_kernel = 3;
  int pool_stride = 3;
  bool length_normalize = false;

  void validate(int input_dim) const {
    if (block_dims.empty()) throw ConfigError("embedder needs at least one block");
    if (block_dims.front().first != input_dim) {
      throw ConfigError("embedder block 1 input (" +
                        std::to_string(block_dims.front().first) +
                        ") must equal the bottleneck width (" +
                        std::to_string(input_dim) + ")");
    }
    for (std::size_t i = 1; i < block_dims.size(); ++i) {
      if (block_dims[i].first != block_dims[i - 1].second) {
        throw ConfigError("embedder block dimensions do not chain");
      }
    }
    for (const auto& [in, out] : block_dims) {
      if (in <= 0 || out <= 0) throw ConfigError("embedder widths must be positive");
    }
    if (embedding_dim <= 0) throw ConfigError("embedding_dim must be positive");
    if (pool_kernel < 1 || pool_stride < 1) {
      throw ConfigError("embedder pooling geometry must be positive");
    }
  }
};

inline json to_json(const EmbedderConfig& c) {
  json blocks = json::array();
  for (const auto& [in, out] : c.block_dims) blocks.push_back({in, out});
  return {{"block_dims", blocks},
          {"embedding_dim", c.embedding_dim},
          {"pool_kernel", c.pool_kernel},
          {"pool_stride", c.pool_stride},
          {"length_normalize", c.length_normalize}};
}

inline EmbedderConfig embedder_config_from_json(const json& j) {
  EmbedderConfig c;
  StrictObject o(j, "embedder");
  std::vector<std::array<int, 2>> blocks;
  for (const auto& [in, out] : c.block_dims) blocks.push_back({in, out});
  o.get("block_dims", blocks);
  c.block_dims.clear();
  for (const auto& b : blocks) c.block_dims.emplace_back(b[0], b[1]);
  o.get("embedding_dim", c.embedding_dim);
  o.get("pool_kernel", c.pool_kernel);
  o.get("pool_stride", c.pool_stride);
  o.get("length_normalize", c.length_normalize);
  o.finish();
  return c;
}

// conv(k=1) -> BN -> PReLU -> conv(k=1) -> BN, plus the skip path (learned
// pointwise map when widths differ), PReLU, then max-pooling over frames.
class ResidualBlock {
 public:
  ResidualBlock(ParameterSet& params, const std::string& name, int in_dim,
                int out_dim, int pool_kernel, int pool_stride, Rng& rng)
      : in_dim_(in_dim),
        out_dim_(out_dim),
        pool_kernel_(pool_kernel),
        pool_stride_(pool_stride),
        conv1_(params, name + ".conv1", in_dim, out_dim, rng, false),
        bn1_(params, name + ".bn1", out_dim),
        act1_(params, name + ".prelu1"),
        conv2_(params, name + ".conv2", out_dim, out_dim, rng, false),
        bn2_(params, name + ".bn2", out_dim),
        act2_(params, name + ".prelu2") {
    if (in_dim != out_dim) {
      skip_ = Linear(params, name + ".skip", in_dim, out_dim, rng, false);
    }
  }

  Var operator()(const Var& x, const ForwardContext& ctx) const {
    if (x.cols() != in_dim_) {
      throw std::invalid_argument("residual block expects " +
                                  std::to_string(in_dim_) + " channels, got " +
                                  std::to_string(x.cols()));
    }
    Var h = act1_(bn1_(conv1_(x), ctx));
    h = bn2_(conv2_(h), ctx);
    Var skip = in_dim_ == out_dim_ ? x : skip_(x);
    return max_pool_rows(act2_(add(h, skip)), pool_kernel_, pool_stride_);
  }

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  const Linear& conv1() const { return conv1_; }
  const Linear& conv2() const { return conv2_; }
  bool has_skip_projection() const { return skip_.weight().defined(); }

 private:
  int in_dim_;
  int out_dim_;
  int pool_kernel_;
  int pool_stride_;
  Linear conv1_;
  BatchNorm bn1_;
  PReLU act1_;
  Linear conv2_;
  BatchNorm bn2_;
  PReLU act2_;
  Linear skip_;
};

// Bottleneck features of the reference speech -> fixed-size embedding row.
class SpeakerEmbedder {
 public:
  SpeakerEmbedder(ParameterSet& params, const EmbedderConfig& config,
                  int input_dim, Rng& rng)
      : config_(config) {
    config_.validate(input_dim);
    for (std::size_t i = 0; i < config_.block_dims.size(); ++i) {
      const auto [in, out] = config_.block_dims[i];
      blocks_.emplace_back(params, "embedder.block" + std::to_string(i + 1), in,
                           out, config_.pool_kernel, config_.pool_stride, rng);
    }
    output_ = Linear(params, "embedder.output", config_.block_dims.back().second,
                     config_.embedding_dim, rng);
  }

  // [T x input_dim] -> [1 x embedding_dim].
  Var operator()(const Var& features, const ForwardContext& ctx) const {
    Var h = features;
    for (const auto& block : blocks_) h = block(h, ctx);
    Var e = mean_rows(output_(h));
    return config_.length_normalize ? l2_normalize_rows(e) : e;
  }

  const std::vector<ResidualBlock>& blocks() const { return blocks_; }
  const EmbedderConfig& config() const { return config_; }
  int embedding_dim() const { return config_.embedding_dim; }

 private:
  EmbedderConfig config_;
  std::vector<ResidualBlock> blocks_;
  Linear output_;
};

// Linear speaker classifier on top of the embedding.
class SpeakerHead {
 public:
  SpeakerHead(ParameterSet& params, int embedding_dim, int n_speakers, Rng& rng)
      : linear_(params, "speaker_head", embedding_dim, checked(n_speakers), rng) {}

  Var operator()(const Var& embedding) const {
    if (embedding.cols() != linear_.in_dim()) {
      throw std::invalid_argument("speaker head expects a " +
                                  std::to_string(linear_.in_dim()) +
                                  "-dim embedding, got " +
                                  std::to_string(embedding.cols()));
    }
    return linear_(embedding);
  }

  int n_speakers() const { return static_cast<int>(linear_.out_dim()); }
  Linear& linear() { return linear_; }

 private:
  static int checked(int n_speakers) {
    if (n_speakers < 1) throw std::invalid_argument("n_speakers must be >= 1");
    return n_speakers;
  }

  Linear linear_;
};

}  // namespace tse
