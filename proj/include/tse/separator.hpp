// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Mask-estimation networks: TCN block, conformer block, external
// feed-forward block, the three separator stacks and the per-scale mask
// heads.

#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "tse/frontend.hpp"
#include "tse/json_util.hpp"
#include "tse/layers.hpp"
#include "tse/ops.hpp"

namespace tse {

enum class Architecture { kTcnBaseline, kConformerFfn, kTcnConformer };
enum class ConvGating { kSwish3x, kGlu2x };

inline std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::kTcnBaseline: return "tcn_baseline";
    case Architecture::kConformerFfn: return "conformer_ffn";
    case Architecture::kTcnConformer: return "tcn_conformer";
  }
  return "unknown";
}

inline Architecture parse_architecture(const std::string& s) {
  if (s == "tcn_baseline") return Architecture::kTcnBaseline;
  if (s == "conformer_ffn") return Architecture::kConformerFfn;
  if (s == "tcn_conformer") return Architecture::kTcnConformer;
  throw ConfigError("unknown architecture: " + s +
                    " (expected tcn_baseline, conformer_ffn or tcn_conformer)");
}

inline std::string to_string(ConvGating g) {
  return g == ConvGating::kSwish3x ? "swish3x" : "glu2x";
}

inline ConvGating parse_conv_gating(const std::string& s) {
  if (s == "swish3x") return ConvGating::kSwish3x;
  if (s == "glu2x") return ConvGating::kGlu2x;
  throw ConfigError("unknown conv_gating: " + s + " (expected swish3x or glu2x)");
}

struct SeparatorConfig {
  Architecture architecture = Architecture::kTcnConformer;
  // K, the number of stacks of the proposed architectures.
  int stacks = 4;
  int model_dim = 512;
  int heads = 8;
  int conv_kernel = 31;
  int conv_expansion = 3;
  int ffn_expansion = 4;
  double dropout = 0.1;
  ConvGating conv_gating = ConvGating::kSwish3x;
  int tcn_hidden = 512;
  int tcn_kernel = 3;
  // Dilation of the TCN block in each TCN-Conformer stack; empty means 1.
  std::vector<int> tcn_conformer_dilations;
  int baseline_stacks = 4;
  int baseline_blocks = 8;
  // Hidden width of the external feed-forward block; 0 means model_dim.
  int external_ffn_hidden = 0;

  int ffn_hidden() const { return ffn_expansion * model_dim; }
  int external_hidden() const {
    return external_ffn_hidden > 0 ? external_ffn_hidden : model_dim;
  }
  int tcn_conformer_dilation(int stack) const {
    return tcn_conformer_dilations.empty()
               ? 1
               : tcn_conformer_dilations.at(static_cast<std::size_t>(stack));
  }

  void validate(int bottleneck_dim, int embedding_dim) const {
    if (model_dim != bottleneck_dim + embedding_dim) {
      throw ConfigError("separator model_dim (" + std::to_string(model_dim) +
                        ") must equal bottleneck_dim + embedding_dim (" +
                        std::to_string(bottleneck_dim + embedding_dim) + ")");
    }
    if (heads <= 0 || model_dim % heads != 0) {
      throw ConfigError("heads must divide model_dim");
    }
    if ((model_dim / heads) % 2 != 0) {
      throw ConfigError("per-head width must be even for positional encoding");
    }
    if (stacks < 1) throw ConfigError("stacks must be >= 1");
    if (conv_kernel % 2 == 0 || tcn_kernel % 2 == 0) {
      throw ConfigError("convolution kernels must be odd");
    }
    if (conv_expansion < 1 || ffn_expansion < 1) {
      throw ConfigError("expansion factors must be >= 1");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    if (tcn_hidden <= 0) throw ConfigError("tcn_hidden must be positive");
    if (!tcn_conformer_dilations.empty() &&
        tcn_conformer_dilations.size() != static_cast<std::size_t>(stacks)) {
      throw ConfigError("tcn_conformer_dilations needs one entry per stack");
    }
    for (int d : tcn_conformer_dilations) {
      if (d < 1) throw ConfigError("dilations must be >= 1");
    }
    if (baseline_stacks < 1 || baseline_blocks < 1) {
      throw ConfigError("baseline stacks and blocks must be >= 1");
    }
  }
};

inline json to_json(const SeparatorConfig& c) {
  return {{"architecture", to_string(c.architecture)},
          {"stacks", c.stacks},
          {"model_dim", c.model_dim},
          {"heads", c.heads},
          {"conv_kernel", c.conv_kernel},
          {"conv_expansion", c.conv_expansion},
          {"ffn_expansion", c.ffn_expansion},
          {"dropout", c.dropout},
          {"conv_gating", to_string(c.conv_gating)},
          {"tcn_hidden", c.tcn_hidden},
          {"tcn_kernel", c.tcn_kernel},
          {"tcn_conformer_dilations", c.tcn_conformer_dilations},
          {"baseline_stacks", c.baseline_stacks},
          {"baseline_blocks", c.baseline_blocks},
          {"external_ffn_hidden", c.external_ffn_hidden}};
}

inline SeparatorConfig separator_config_from_json(const json& j) {
  SeparatorConfig c;
  StrictObject o(j, "separator");
  std::string arch = to_string(c.architecture);
  std::string gating = to_string(c.conv_gating);
  o.get("architecture", arch);
  o.get("stacks", c.stacks);
  o.get("model_dim", c.model_dim);
  o.get("heads", c.heads);
  o.get("conv_kernel", c.conv_kernel);
  o.get("conv_expansion", c.conv_expansion);
  o.get("ffn_expansion", c.ffn_expansion);
  o.get("dropout", c.dropout);
  o.get("conv_gating", gating);
  o.get("tcn_hidden", c.tcn_hidden);
  o.get("tcn_kernel", c.tcn_kernel);
  o.get("tcn_conformer_dilations", c.tcn_conformer_dilations);
  o.get("baseline_stacks", c.baseline_stacks);
  o.get("baseline_blocks", c.baseline_blocks);
  o.get("external_ffn_hidden", c.external_ffn_hidden);
  o.finish();
  c.architecture = parse_architecture(arch);
  c.conv_gating = parse_conv_gating(gating);
  return c;
}

namespace detail {
inline void require_channels(const Var& x, Eigen::Index expected,
                             const char* block) {
  if (x.cols() != expected) {
    throw std::invalid_argument(std::string(block) + " expects " +
                                std::to_string(expected) + " channels, got " +
                                std::to_string(x.cols()));
  }
}
}  // namespace detail

// pointwise -> PReLU -> gLN -> dilated depthwise -> PReLU -> gLN -> pointwise,
// wrapped in a residual connection.
class TcnBlock {
 public:
  TcnBlock(ParameterSet& params, const std::string& name, int dim, int hidden,
           int kernel, int dilation, Rng& rng)
      : dim_(dim),
        in_(params, name + ".in", dim, hidden, rng),
        act1_(params, name + ".prelu1"),
        norm1_(params, name + ".norm1", hidden),
        depthwise_(params, name + ".depthwise", hidden, kernel, dilation, rng),
        act2_(params, name + ".prelu2"),
        norm2_(params, name + ".norm2", hidden),
        out_(params, name + ".out", hidden, dim, rng) {}

  Var operator()(const Var& x) const {
    detail::require_channels(x, dim_, "tcn block");
    Var h = norm1_(act1_(in_(x)));
    h = norm2_(act2_(depthwise_(h)));
    return add(x, out_(h));
  }

  int dim() const { return dim_; }
  const Linear& input_projection() const { return in_; }
  const DepthwiseConv& depthwise() const { return depthwise_; }
  void zero_output_layer() { out_.zero(); }

 private:
  int dim_;
  Linear in_;
  PReLU act1_;
  GlobalLayerNorm norm1_;
  DepthwiseConv depthwise_;
  PReLU act2_;
  GlobalLayerNorm norm2_;
  Linear out_;
};

// LN -> linear (expand) -> swish -> dropout -> linear -> dropout.
class FeedForwardModule {
 public:
  FeedForwardModule(ParameterSet& params, const std::string& name, int dim,
                    int hidden, double dropout, Rng& rng)
      : norm_(params, name + ".norm", dim),
        expand_(params, name + ".expand", dim, hidden, rng),
        project_(params, name + ".project", hidden, dim, rng),
        dropout_(dropout) {}

  Var operator()(const Var& x, const ForwardContext& ctx) const {
    Var h = dropout(swish(expand_(norm_(x))), dropout_, ctx.rng, ctx.training);
    return dropout(project_(h), dropout_, ctx.rng, ctx.training);
  }

  const Linear& expand() const { return expand_; }
  void zero_output_layer() { project_.zero(); }

 private:
  LayerNorm norm_;
  Linear expand_;
  Linear project_;
  double dropout_;
};

// Sinusoidal encodings of relative distances -(T-1) .. T-1, one per row.
inline Matrix relative_position_encoding(Eigen::Index frames, Eigen::Index dim) {
  Matrix pe(2 * frames - 1, dim);
  for (Eigen::Index m = 0; m < 2 * frames - 1; ++m) {
    const double distance = static_cast<double>(m - (frames - 1));
    for (Eigen::Index i = 0; i < dim / 2; ++i) {
      const double freq =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
      pe(m, 2 * i) = std::sin(distance * freq);
      pe(m, 2 * i + 1) = std::cos(distance * freq);
    }
  }
  return pe;
}

// Multi-head self-attention with relative positional encoding: the score of
// query i and key j is (q_i + u).k_j + (q_i + v).p_{i-j}, scaled by
// 1/sqrt(head_dim), where p is a learned projection of sinusoidal encodings.
class RelPositionAttention {
 public:
  RelPositionAttention(ParameterSet& params, const std::string& name, int dim,
                       int heads, double dropout, Rng& rng)
      : dim_(dim),
        heads_(heads),
        query_(params, name + ".query", dim, dim, rng),
        key_(params, name + ".key", dim, dim, rng),
        value_(params, name + ".value", dim, dim, rng),
        position_(params, name + ".position", dim, dim, rng, false),
        output_(params, name + ".output", dim, dim, rng),
        content_bias_(params.add(name + ".content_bias", Matrix::Zero(1, dim))),
        position_bias_(params.add(name + ".position_bias", Matrix::Zero(1, dim))),
        dropout_(dropout) {
    if (heads <= 0 || dim % heads != 0) {
      throw std::invalid_argument("attention heads must divide the model width");
    }
  }

  Var operator()(const Var& x, const ForwardContext& ctx) const {
    const Eigen::Index frames = x.rows();
    const Eigen::Index head_dim = dim_ / heads_;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Var q = query_(x);
    Var k = key_(x);
    Var v = value_(x);
    Var p = position_(Var(relative_position_encoding(frames, dim_)));
    Var qu = add_row(q, content_bias_);
    Var qv = add_row(q, position_bias_);

    last_weights_.assign(static_cast<std::size_t>(heads_), Matrix());
    std::vector<Var> contexts;
    for (Eigen::Index h = 0; h < heads_; ++h) {
      const Eigen::Index off = h * head_dim;
      Var content = matmul(slice_cols(qu, off, head_dim),
                           transpose(slice_cols(k, off, head_dim)));
      Var positional = rel_shift(matmul(slice_cols(qv, off, head_dim),
                                        transpose(slice_cols(p, off, head_dim))));
      Var weights = softmax_rows(scale(add(content, positional), inv_scale));
      last_weights_[static_cast<std::size_t>(h)] = weights.value();
      weights = dropout(weights, dropout_, ctx.rng, ctx.training);
      contexts.push_back(matmul(weights, slice_cols(v, off, head_dim)));
    }
    return output_(concat_cols(contexts));
  }

  int heads() const { return heads_; }
  // Attention weights of each head from the most recent forward pass.
  const std::vector<Matrix>& last_weights() const { return last_weights_; }
  void zero_output_layer() { output_.zero(); }

 private:
  int dim_;
  int heads_;
  Linear query_;
  Linear key_;
  Linear value_;
  Linear position_;
  Linear output_;
  Var content_bias_;
  Var position_bias_;
  double dropout_;
  mutable std::vector<Matrix> last_weights_;
};

// LN -> pointwise expansion -> activation -> depthwise conv -> BN -> swish ->
// pointwise back to the model width -> dropout.
//   swish3x: expand to conv_expansion * D, swish, depthwise over that width.
//   glu2x:   expand to 2 * D, GLU back to D, depthwise over D.
class ConvolutionModule {
 public:
  ConvolutionModule(ParameterSet& params, const std::string& name, int dim,
                    int expansion, int kernel, ConvGating gating, double dropout,
                    Rng& rng)
      : gating_(gating), dropout_(dropout) {
    const int expanded = gating == ConvGating::kSwish3x ? expansion * dim : 2 * dim;
    const int conv_width = gating == ConvGating::kSwish3x ? expanded : dim;
    norm_ = LayerNorm(params, name + ".norm", dim);
    expand_ = Linear(params, name + ".expand", dim, expanded, rng);
    depthwise_ = DepthwiseConv(params, name + ".depthwise", conv_width, kernel, 1, rng);
    bn_ = BatchNorm(params, name + ".bn", conv_width);
    project_ = Linear(params, name + ".project", conv_width, dim, rng);
  }

  Var operator()(const Var& x, const ForwardContext& ctx) const {
    Var h = expand_(norm_(x));
    h = gating_ == ConvGating::kSwish3x ? swish(h) : glu(h);
    h = swish(bn_(depthwise_(h), ctx));
    return dropout(project_(h), dropout_, ctx.rng, ctx.training);
  }

  const Linear& expand() const { return expand_; }
  const DepthwiseConv& depthwise() const { return depthwise_; }
  void zero_output_layer() { project_.zero(); }

 private:
  ConvGating gating_;
  double dropout_;
  LayerNorm norm_;
  Linear expand_;
  DepthwiseConv depthwise_;
  BatchNorm bn_;
  Linear project_;
};

// x + FFN/2, + MHSA, + Conv, + FFN/2, then a final layer norm.
class ConformerBlock {
 public:
  ConformerBlock(ParameterSet& params, const std::string& name,
                 const SeparatorConfig& cfg, Rng& rng)
      : dim_(cfg.model_dim),
        ffn1_(params, name + ".ffn1", cfg.model_dim, cfg.ffn_hidden(), cfg.dropout, rng),
        attn_norm_(params, name + ".attention_norm", cfg.model_dim),
        attention_(params, name + ".attention", cfg.model_dim, cfg.heads,
                   cfg.dropout, rng),
        conv_(params, name + ".conv", cfg.model_dim, cfg.conv_expansion,
              cfg.conv_kernel, cfg.conv_gating, cfg.dropout, rng),
        ffn2_(params, name + ".ffn2", cfg.model_dim, cfg.ffn_hidden(), cfg.dropout, rng),
        final_norm_(params, name + ".final_norm", cfg.model_dim),
        dropout_(cfg.dropout) {}

  Var operator()(const Var& x, const ForwardContext& ctx) const {
    detail::require_channels(x, dim_, "conformer block");
    Var h = add(x, scale(ffn1_(x, ctx), 0.5));
    h = add(h, dropout(attention_(attn_norm_(h), ctx), dropout_, ctx.rng,
                       ctx.training));
    h = add(h, conv_(h, ctx));
    h = add(h, scale(ffn2_(h, ctx), 0.5));
    return final_norm_(h);
  }

  int dim() const { return dim_; }
  const FeedForwardModule& ffn1() const { return ffn1_; }
  const FeedForwardModule& ffn2() const { return ffn2_; }
  const RelPositionAttention& attention() const { return attention_; }
  const ConvolutionModule& conv() const { return conv_; }

  // Zeroes the last layer of every sub-block, which makes each residual
  // branch contribute nothing.
  void zero_output_layers() {
    ffn1_.zero_output_layer();
    attention_.zero_output_layer();
    conv_.zero_output_layer();
    ffn2_.zero_output_layer();
  }

 private:
  int dim_;
  FeedForwardModule ffn1_;
  LayerNorm attn_norm_;
  RelPositionAttention attention_;
  ConvolutionModule conv_;
  FeedForwardModule ffn2_;
  LayerNorm final_norm_;
  double dropout_;
};

// Linear -> swish -> dropout -> linear -> dropout, output width in_dim / 2.
class ExternalFeedForward {
 public:
  ExternalFeedForward(ParameterSet& params, const std::string& name, int in_dim,
                      int hidden, double dropout, Rng& rng)
      : in_dim_(in_dim),
        first_(params, name + ".linear1", in_dim, hidden, rng),
        second_(params, name + ".linear2", hidden, in_dim / 2, rng),
        dropout_(dropout) {
    if (in_dim % 2 != 0) {
      throw std::invalid_argument("external feed-forward input width must be even");
    }
  }

  Var operator()(const Var& x, const ForwardContext& ctx) const {
    detail::require_channels(x, in_dim_, "external feed-forward block");
    Var h = dropout(swish(first_(x)), dropout_, ctx.rng, ctx.training);
    return dropout(second_(h), dropout_, ctx.rng, ctx.training);
  }

  int in_dim() const { return in_dim_; }
  int out_dim() const { return static_cast<int>(second_.out_dim()); }

 private:
  int in_dim_;
  Linear first_;
  Linear second_;
  double dropout_;
};

// Appends the [1 x E] embedding to every frame.
inline Var concat_embedding(const Var& x, const Var& embedding) {
  if (embedding.rows() != 1) {
    throw std::invalid_argument("speaker embedding must be a single row");
  }
  return concat_cols(x, repeat_rows(embedding, x.rows()));
}

// A separator trunk: [T x bottleneck] features and a [1 x E] embedding in,
// [T x bottleneck] out.
class SeparatorStack {
 public:
  virtual ~SeparatorStack() = default;
  virtual Var operator()(const Var& features, const Var& embedding,
                         const ForwardContext& ctx) const = 0;
  virtual Architecture architecture() const = 0;
  // Channel width seen at the input of every conformer/TCN block in the
  // most recent forward pass.
  const std::vector<Eigen::Index>& observed_block_inputs() const {
    return observed_;
  }

 protected:
  void observe(const Var& x) const { observed_.push_back(x.cols()); }
  void reset_observed() const { observed_.clear(); }

 private:
  mutable std::vector<Eigen::Index> observed_;
};

// K x (concat embedding -> conformer -> external FFN).
class ConformerFfnStack : public SeparatorStack {
 public:
  ConformerFfnStack(ParameterSet& params, const SeparatorConfig& cfg, Rng& rng) {
    for (int k = 0; k < cfg.stacks; ++k) {
      const std::string base = "separator.stack" + std::to_string(k + 1);
      conformers_.emplace_back(params, base + ".conformer", cfg, rng);
      ffns_.emplace_back(params, base + ".ffn", cfg.model_dim,
                         cfg.external_hidden(), cfg.dropout, rng);
    }
  }

  Var operator()(const Var& features, const Var& embedding,
                 const ForwardContext& ctx) const override {
    reset_observed();
    Var h = features;
    for (std::size_t k = 0; k < conformers_.size(); ++k) {
      Var joined = concat_embedding(h, embedding);
      observe(joined);
      h = ffns_[k](conformers_[k](joined, ctx), ctx);
    }
    return h;
  }

  Architecture architecture() const override {
    return Architecture::kConformerFfn;
  }
  const std::vector<ConformerBlock>& conformers() const { return conformers_; }
  const std::vector<ExternalFeedForward>& ffns() const { return ffns_; }

 private:
  std::vector<ConformerBlock> conformers_;
  std::vector<ExternalFeedForward> ffns_;
};

// K x (concat embedding -> TCN block -> conformer -> pointwise projection
// back to the bottleneck width).
class TcnConformerStack : public SeparatorStack {
 public:
  TcnConformerStack(ParameterSet& params, const SeparatorConfig& cfg,
                    int bottleneck_dim, Rng& rng) {
    for (int k = 0; k < cfg.stacks; ++k) {
      const std::string base = "separator.stack" + std::to_string(k + 1);
      tcns_.emplace_back(params, base + ".tcn", cfg.model_dim, cfg.tcn_hidden,
                         cfg.tcn_kernel, cfg.tcn_conformer_dilation(k), rng);
      conformers_.emplace_back(params, base + ".conformer", cfg, rng);
      projections_.emplace_back(params, base + ".proj", cfg.model_dim,
                                bottleneck_dim, rng);
    }
  }

  Var operator()(const Var& features, const Var& embedding,
                 const ForwardContext& ctx) const override {
    reset_observed();
    Var h = features;
    for (std::size_t k = 0; k < tcns_.size(); ++k) {
      Var joined = concat_embedding(h, embedding);
      observe(joined);
      h = projections_[k](conformers_[k](tcns_[k](joined), ctx));
    }
    return h;
  }

  Architecture architecture() const override {
    return Architecture::kTcnConformer;
  }
  const std::vector<TcnBlock>& tcns() const { return tcns_; }
  const std::vector<ConformerBlock>& conformers() const { return conformers_; }
  const std::vector<Linear>& projections() const { return projections_; }

 private:
  std::vector<TcnBlock> tcns_;
  std::vector<ConformerBlock> conformers_;
  std::vector<Linear> projections_;
};

// Stacks of TCN blocks with dilations 1, 2, 4, ..., 2^(B-1). The embedding is
// concatenated at the first block of each stack and every stack ends with a
// pointwise projection back to the bottleneck width.
class TcnBaselineStack : public SeparatorStack {
 public:
  TcnBaselineStack(ParameterSet& params, const SeparatorConfig& cfg,
                   int bottleneck_dim, Rng& rng)
      : blocks_per_stack_(cfg.baseline_blocks) {
    for (int s = 0; s < cfg.baseline_stacks; ++s) {
      const std::string base = "separator.stack" + std::to_string(s + 1);
      for (int b = 0; b < cfg.baseline_blocks; ++b) {
        blocks_.emplace_back(params, base + ".tcn" + std::to_string(b + 1),
                             cfg.model_dim, cfg.tcn_hidden, cfg.tcn_kernel,
                             1 << b, rng);
      }
      projections_.emplace_back(params, base + ".proj", cfg.model_dim,
                                bottleneck_dim, rng);
    }
  }

  Var operator()(const Var& features, const Var& embedding,
                 const ForwardContext&) const override {
    reset_observed();
    Var h = features;
    for (std::size_t s = 0; s < projections_.size(); ++s) {
      Var x = concat_embedding(h, embedding);
      for (int b = 0; b < blocks_per_stack_; ++b) {
        observe(x);
        x = blocks_[s * static_cast<std::size_t>(blocks_per_stack_) +
                    static_cast<std::size_t>(b)](x);
      }
      h = projections_[s](x);
    }
    return h;
  }

  Architecture architecture() const override {
    return Architecture::kTcnBaseline;
  }
  const std::vector<TcnBlock>& blocks() const { return blocks_; }
  std::vector<Linear>& projections() { return projections_; }

 private:
  int blocks_per_stack_;
  std::vector<TcnBlock> blocks_;
  std::vector<Linear> projections_;
};

inline std::unique_ptr<SeparatorStack> make_separator(ParameterSet& params,
                                                      const SeparatorConfig& cfg,
                                                      int bottleneck_dim,
                                                      int embedding_dim, Rng& rng) {
  cfg.validate(bottleneck_dim, embedding_dim);
  switch (cfg.architecture) {
    case Architecture::kConformerFfn:
      if (2 * bottleneck_dim != cfg.model_dim) {
        throw ConfigError(
            "conformer_ffn halves the model width, so bottleneck_dim must equal "
            "embedding_dim");
      }
      return std::make_unique<ConformerFfnStack>(params, cfg, rng);
    case Architecture::kTcnConformer:
      return std::make_unique<TcnConformerStack>(params, cfg, bottleneck_dim, rng);
    case Architecture::kTcnBaseline:
      return std::make_unique<TcnBaselineStack>(params, cfg, bottleneck_dim, rng);
  }
  throw ConfigError("unknown architecture");
}

// Three independent pointwise maps bottleneck -> channels_per_scale with ReLU.
class MaskHeads {
 public:
  MaskHeads(ParameterSet& params, int bottleneck_dim, int channels, Rng& rng) {
    for (Scale s : kScales) {
      heads_[index_of(s)] =
          Linear(params, "maskhead." + to_string(s), bottleneck_dim, channels, rng);
    }
  }

  std::array<Var, 3> operator()(const Var& y) const {
    std::array<Var, 3> masks;
    for (std::size_t i = 0; i < 3; ++i) masks[i] = relu(heads_[i](y));
    return masks;
  }

  Linear& head(Scale s) { return heads_[index_of(s)]; }

 private:
  std::array<Linear, 3> heads_;
};

}  // namespace tse
