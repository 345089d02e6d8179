// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "tse/model.hpp"
#include "tse/objectives.hpp"
#include "tse/separator.hpp"

namespace tse {
namespace {

using testing::random_matrix;

SeparatorConfig toy_separator(Architecture arch = Architecture::kTcnConformer,
                              int stacks = 1) {
  return testing::toy_run_config(arch, stacks).separator;
}

// Plain per-row layer norm with unit gain and zero shift.
Matrix reference_layer_norm(const Matrix& x, double eps = 1e-5) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    double mean = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) mean += x(t, c);
    mean /= static_cast<double>(x.cols());
    double var = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) var += (x(t, c) - mean) * (x(t, c) - mean);
    var /= static_cast<double>(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      out(t, c) = (x(t, c) - mean) / std::sqrt(var + eps);
    }
  }
  return out;
}

TEST(TcnBlock, ZeroedOutputLayerIsIdentity) {
  ParameterSet p;
  Rng rng(1);
  TcnBlock block(p, "tcn", 8, 6, 3, 4, rng);
  block.zero_output_layer();
  Matrix x = random_matrix(7, 8, rng);
  EXPECT_EQ(block(Var(x)).value(), x);
}

TEST(TcnBlock, PreservesShapeForAnyLength) {
  ParameterSet p;
  Rng rng(2);
  TcnBlock block(p, "tcn", 8, 6, 3, 2, rng);
  for (int t : {1, 2, 5, 100}) {
    Var y = block(Var(random_matrix(t, 8, rng)));
    EXPECT_EQ(y.rows(), t);
    EXPECT_EQ(y.cols(), 8);
  }
  EXPECT_THROW(block(Var(Matrix::Zero(3, 7))), std::invalid_argument);
}

TEST(DepthwiseLayer, ReceptiveFieldIsOnePlusTwiceTheDilation) {
  ParameterSet p;
  Rng rng(3);
  for (int d : {1, 2, 4}) {
    DepthwiseConv conv(p, "dw" + std::to_string(d), 2, 3, d, rng);
    const int t0 = 10;
    Matrix x = Matrix::Zero(21, 2);
    Matrix base = conv(Var(x)).value();
    x(t0, 0) = 1.0;
    Matrix bumped = conv(Var(x)).value();
    int touched = 0;
    for (int t = 0; t < 21; ++t) {
      const bool changed = bumped(t, 0) != base(t, 0);
      if (changed) ++touched;
      const bool in_range = t == t0 || t == t0 - d || t == t0 + d;
      if (!in_range) {
        EXPECT_FALSE(changed) << "d=" << d << " t=" << t;
      }
    }
    EXPECT_EQ(touched, 3) << d;
  }
}

TEST(Conformer, PreservesShapeAndAttentionIsStochastic) {
  ParameterSet p;
  Rng rng(4);
  SeparatorConfig cfg = toy_separator();
  ConformerBlock block(p, "c", cfg, rng);
  for (int t : {1, 2, 5, 100}) {
    Var y = block(Var(random_matrix(t, 8, rng)), ForwardContext{});
    EXPECT_EQ(y.rows(), t);
    EXPECT_EQ(y.cols(), 8);
    ASSERT_EQ(block.attention().last_weights().size(), 2u);
    for (const Matrix& w : block.attention().last_weights()) {
      ASSERT_EQ(w.rows(), t);
      ASSERT_EQ(w.cols(), t);
      EXPECT_GE(w.minCoeff(), 0.0);
      for (Eigen::Index i = 0; i < t; ++i) EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-12);
    }
  }
}

TEST(Conformer, DefaultFeedForwardWidth) {
  ParameterSet p;
  Rng rng(5);
  SeparatorConfig cfg;
  ConformerBlock block(p, "c", cfg, rng);
  EXPECT_EQ(block.ffn1().expand().out_dim(), 2048);
  EXPECT_EQ(block.ffn2().expand().out_dim(), 2048);
  EXPECT_EQ(block.conv().expand().out_dim(), 1536);
  EXPECT_EQ(block.conv().depthwise().kernel_size(), 31);
  EXPECT_EQ(block.attention().heads(), 8);
}

TEST(Conformer, ZeroedBranchesReduceToFinalLayerNorm) {
  ParameterSet p;
  Rng rng(6);
  ConformerBlock block(p, "c", toy_separator(), rng);
  block.zero_output_layers();
  Matrix x = random_matrix(9, 8, rng, 2.0);
  Matrix y = block(Var(x), ForwardContext{}).value();
  EXPECT_LT((y - reference_layer_norm(x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Conformer, GluVariant) {
  ParameterSet p;
  Rng rng(7);
  SeparatorConfig cfg = toy_separator();
  cfg.conv_gating = ConvGating::kGlu2x;
  ConformerBlock block(p, "c", cfg, rng);
  EXPECT_EQ(block.conv().expand().out_dim(), 16);
  EXPECT_EQ(block.conv().depthwise().channels(), 8);
  Var x(random_matrix(5, 8, rng), true);
  Var y = block(x, ForwardContext{});
  EXPECT_EQ(y.rows(), 5);
  auto readout = testing::random_readout(5, 8, 3);
  auto wrt = testing::all_parameters(p);
  wrt.emplace_back("x", x);
  auto r = testing::check_gradients([&] { return readout(block(x, ForwardContext{})); },
                                    wrt);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_EQ(parse_conv_gating(to_string(ConvGating::kGlu2x)), ConvGating::kGlu2x);
}

TEST(ExternalFeedForward, HalvesTheWidth) {
  ParameterSet p;
  Rng rng(8);
  ExternalFeedForward ffn(p, "f", 512, 512, 0.0, rng);
  EXPECT_EQ(ffn.out_dim(), 256);
  Var y = ffn(Var(random_matrix(3, 512, rng)), ForwardContext{});
  EXPECT_EQ(y.cols(), 256);
  EXPECT_THROW(ExternalFeedForward(p, "g", 7, 4, 0.0, rng), std::invalid_argument);
}

TEST(ConcatEmbedding, RepeatsTheEmbeddingOnEveryFrame) {
  Rng rng(9);
  Matrix x = random_matrix(4, 3, rng), e = random_matrix(1, 2, rng);
  Matrix y = concat_embedding(Var(x), Var(e)).value();
  ASSERT_EQ(y.cols(), 5);
  for (Eigen::Index t = 0; t < 4; ++t) {
    EXPECT_EQ(y.row(t).head(3), x.row(t));
    EXPECT_EQ(y.row(t).tail(2), e.row(0));
  }
  EXPECT_THROW(concat_embedding(Var(x), Var(Matrix::Zero(2, 2))), std::invalid_argument);
}

TEST(SeparatorStack, DefaultBlocksSee512Channels) {
  for (Architecture arch : {Architecture::kTcnConformer, Architecture::kConformerFfn}) {
    ParameterSet p;
    Rng rng(10);
    SeparatorConfig cfg;
    cfg.architecture = arch;
    cfg.stacks = 2;
    auto sep = make_separator(p, cfg, 256, 256, rng);
    Var y = (*sep)(Var(random_matrix(3, 256, rng, 0.1)),
                   Var(random_matrix(1, 256, rng, 0.1)), ForwardContext{});
    EXPECT_EQ(y.rows(), 3);
    EXPECT_EQ(y.cols(), 256);
    EXPECT_EQ(sep->observed_block_inputs(), (std::vector<Eigen::Index>{512, 512}));
  }
}

TEST(SeparatorStack, BlockCountsFollowStacks) {
  for (int k : {1, 2, 4}) {
    ParameterSet p;
    Rng rng(11);
    TcnConformerStack tc(p, toy_separator(Architecture::kTcnConformer, k), 4, rng);
    EXPECT_EQ(tc.tcns().size(), static_cast<std::size_t>(k));
    EXPECT_EQ(tc.conformers().size(), static_cast<std::size_t>(k));
    ParameterSet q;
    ConformerFfnStack cf(q, toy_separator(Architecture::kConformerFfn, k), rng);
    EXPECT_EQ(cf.conformers().size(), static_cast<std::size_t>(k));
    EXPECT_EQ(cf.ffns().size(), static_cast<std::size_t>(k));
  }
}

TEST(SeparatorStack, ParameterCountIsLinearInStacks) {
  for (Architecture arch : {Architecture::kTcnConformer, Architecture::kConformerFfn}) {
    std::vector<std::size_t> counts;
    for (int k = 1; k <= 3; ++k) {
      ParameterSet p;
      Rng rng(12);
      make_separator(p, toy_separator(arch, k), 4, 4, rng);
      counts.push_back(p.scalar_count());
    }
    EXPECT_EQ(counts[2] - counts[1], counts[1] - counts[0]) << to_string(arch);
    EXPECT_GT(counts[1], counts[0]);
  }
}

TEST(SeparatorStack, ConformerFfnNeedsEqualHalves) {
  ParameterSet p;
  Rng rng(13);
  SeparatorConfig cfg = toy_separator(Architecture::kConformerFfn);
  cfg.model_dim = 12;
  cfg.heads = 2;
  EXPECT_THROW(make_separator(p, cfg, 8, 4, rng), ConfigError);
  cfg.model_dim = 10;
  EXPECT_THROW(make_separator(p, cfg, 8, 4, rng), ConfigError);
}

TEST(TcnBaseline, DilationsDoublePerBlock) {
  ParameterSet p;
  Rng rng(14);
  SeparatorConfig cfg;
  cfg.architecture = Architecture::kTcnBaseline;
  cfg.baseline_stacks = 1;
  cfg.tcn_hidden = 8;
  TcnBaselineStack stack(p, cfg, 256, rng);
  ASSERT_EQ(stack.blocks().size(), 8u);
  for (int b = 0; b < 8; ++b) EXPECT_EQ(stack.blocks()[b].depthwise().dilation(), 1 << b);
}

TEST(TcnBaseline, ZeroProjectionGivesZeroOutput) {
  ParameterSet p;
  Rng rng(15);
  SeparatorConfig cfg = toy_separator(Architecture::kTcnBaseline);
  cfg.baseline_stacks = 2;
  TcnBaselineStack stack(p, cfg, 4, rng);
  for (auto& proj : stack.projections()) proj.zero();
  Var y = stack(Var(random_matrix(6, 4, rng)), Var(random_matrix(1, 4, rng)),
                ForwardContext{});
  EXPECT_EQ(y.rows(), 6);
  EXPECT_EQ(y.value().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(stack.observed_block_inputs().size(), 4u);
}

TEST(MaskHeads, MasksAreNonNegative) {
  ParameterSet p;
  Rng rng(16);
  MaskHeads heads(p, 4, 6, rng);
  auto masks = heads(Var(random_matrix(10, 4, rng, 3.0)));
  for (const Var& m : masks) {
    EXPECT_EQ(m.rows(), 10);
    EXPECT_EQ(m.cols(), 6);
    EXPECT_GE(m.value().minCoeff(), 0.0);
  }
}

TEST(SeparatorStack, AllArchitecturesPreserveShape) {
  for (Architecture arch : {Architecture::kTcnConformer, Architecture::kConformerFfn,
                            Architecture::kTcnBaseline}) {
    ParameterSet p;
    Rng rng(17);
    auto sep = make_separator(p, toy_separator(arch, 2), 4, 4, rng);
    EXPECT_EQ(sep->architecture(), arch);
    for (int t : {1, 2, 5, 100}) {
      Var y = (*sep)(Var(random_matrix(t, 4, rng)), Var(random_matrix(1, 4, rng)),
                     ForwardContext{});
      EXPECT_EQ(y.rows(), t) << to_string(arch);
      EXPECT_EQ(y.cols(), 4) << to_string(arch);
    }
  }
}

// Block-level gradient checks at D = 8, T = 6, two heads.
testing::GradCheckResult block_gradients(ParameterSet& p,
                                         const std::function<Var(const Var&)>& f,
                                         Rng& rng) {
  Var x(random_matrix(6, 8, rng), true);
  auto readout = testing::random_readout(6, static_cast<Eigen::Index>(f(x).cols()), 21);
  auto wrt = testing::all_parameters(p);
  wrt.emplace_back("x", x);
  return testing::check_gradients([&] { return readout(f(x)); }, wrt);
}

TEST(BlockGradients, TcnBlock) {
  ParameterSet p;
  Rng rng(19);
  TcnBlock block(p, "tcn", 8, 6, 3, 2, rng);
  auto r = block_gradients(p, [&](const Var& x) { return block(x); }, rng);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(BlockGradients, ConformerBlockTrainAndEval) {
  ParameterSet p;
  Rng rng(20);
  ConformerBlock block(p, "c", toy_separator(), rng);
  for (bool training : {false, true}) {
    ForwardContext ctx{training, &rng};
    auto r = block_gradients(p, [&](const Var& x) { return block(x, ctx); }, rng);
    EXPECT_LT(r.max_rel_error, 1e-4) << training << " " << r.worst;
  }
}

TEST(BlockGradients, ExternalFeedForward) {
  ParameterSet p;
  Rng rng(21);
  ExternalFeedForward ffn(p, "f", 8, 8, 0.0, rng);
  auto r = block_gradients(p, [&](const Var& x) { return ffn(x, ForwardContext{}); }, rng);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

// End-to-end gradient check of the complete model: mixture of 14 samples at
// 1.6 kHz gives T = 6 frames; model width 8, two heads, one stack.
class FullModelGradients : public ::testing::TestWithParam<Architecture> {};

TEST_P(FullModelGradients, MatchFiniteDifferences) {
  RunConfig cfg = testing::toy_run_config(GetParam(), 1);
  SpeakerExtractor model(cfg, 3, 5);
  Rng rng(18);
  Waveform mixture = testing::noise_waveform(14, rng, 1600, 0.5);
  Waveform target = testing::noise_waveform(14, rng, 1600, 0.5);
  Waveform reference = testing::noise_waveform(40, rng, 1600, 0.5);
  LossWeights weights;
  ForwardContext ctx{true, &rng};
  auto loss = [&] {
    auto out = model.forward(mixture, reference, ctx);
    return multitask_loss(out.estimates, target, out.logits, 1, weights);
  };
  testing::GradCheckOptions opts;
  opts.max_per_tensor = 12;
  auto r = testing::check_gradients(loss, testing::all_parameters(model.params()), opts);
  EXPECT_GT(r.checked, 100u);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

INSTANTIATE_TEST_SUITE_P(Architectures, FullModelGradients,
                         ::testing::Values(Architecture::kTcnConformer,
                                           Architecture::kConformerFfn,
                                           Architecture::kTcnBaseline),
                         [](const auto& info) { return to_string(info.param); });

}  // namespace
}  // namespace tse
