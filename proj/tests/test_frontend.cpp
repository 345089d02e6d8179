// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "tse/frontend.hpp"

namespace tse {
namespace {

using testing::noise_waveform;
using testing::random_matrix;

FrontendConfig toy_frontend(int channels = 4, int bottleneck = 4) {
  FrontendConfig c;
  c.sample_rate = 1600;  // filters of 4, 16 and 32 samples, hop 2
  c.channels_per_scale = channels;
  c.bottleneck_dim = bottleneck;
  return c;
}

TEST(Frontend, DefaultGeometry) {
  FrontendConfig c;
  EXPECT_EQ(c.filter_length(Scale::kShort), 40);
  EXPECT_EQ(c.filter_length(Scale::kMid), 160);
  EXPECT_EQ(c.filter_length(Scale::kLong), 320);
  EXPECT_EQ(c.hop(), 20);
}

TEST(Frontend, FourSecondsGive3199Frames) {
  ParameterSet p;
  Rng rng(1);
  Frontend fe(p, FrontendConfig{}, rng);
  EXPECT_EQ(fe.frame_count(64000), 3199);
  Rng data(2);
  auto features = fe.encode_multiscale(noise_waveform(64000, data));
  for (const auto& s : features.scales) {
    EXPECT_EQ(s.rows(), 3199);
    EXPECT_EQ(s.cols(), 256);
  }
  EXPECT_EQ(features.concat.cols(), 768);
  Var b = fe.project_bottleneck(features.concat);
  EXPECT_EQ(b.rows(), 3199);
  EXPECT_EQ(b.cols(), 256);
}

TEST(Frontend, ScalesShareFrameCountForAllLengths) {
  ParameterSet p;
  Rng rng(3);
  Frontend fe(p, toy_frontend(), rng);
  Rng data(4);
  for (std::size_t n = 32; n < 120; n += 7) {
    auto f = fe.encode_multiscale(noise_waveform(n, data, 1600));
    EXPECT_EQ(f.scales[0].rows(), f.scales[1].rows()) << n;
    EXPECT_EQ(f.scales[0].rows(), f.scales[2].rows()) << n;
    EXPECT_EQ(f.scales[0].rows(), fe.frame_count(n)) << n;
  }
}

TEST(Frontend, ZeroInputGivesZeroFeatures) {
  ParameterSet p;
  Rng rng(5);
  Frontend fe(p, toy_frontend(), rng);
  auto f = fe.encode_multiscale(Waveform::zeros(50, 1600));
  EXPECT_EQ(f.concat.value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Frontend, FeaturesAreRectified) {
  ParameterSet p;
  Rng rng(6);
  Frontend fe(p, toy_frontend(), rng);
  Rng data(7);
  auto f = fe.encode_multiscale(noise_waveform(80, data, 1600));
  EXPECT_GE(f.concat.value().minCoeff(), 0.0);
  EXPECT_GT(f.concat.value().maxCoeff(), 0.0);
}

TEST(Frontend, ToyChannelCounts) {
  ParameterSet p;
  Rng rng(8);
  Frontend fe(p, toy_frontend(8, 8), rng);
  Rng data(9);
  // 22 samples -> (22 - 4) / 2 + 1 = 10 frames.
  auto f = fe.encode_multiscale(noise_waveform(22, data, 1600));
  EXPECT_EQ(f.concat.rows(), 10);
  EXPECT_EQ(f.concat.cols(), 24);
  Var b = fe.project_bottleneck(f.concat);
  EXPECT_EQ(b.rows(), 10);
  EXPECT_EQ(b.cols(), 8);
}

TEST(Frontend, ErrorPaths) {
  ParameterSet p;
  Rng rng(10);
  Frontend fe(p, toy_frontend(), rng);
  EXPECT_THROW(fe.encode_scale(Waveform::zeros(3, 1600), Scale::kShort),
               std::invalid_argument);
  EXPECT_THROW(fe.project_bottleneck(Var(Matrix::Zero(5, 11))), std::invalid_argument);
  EXPECT_THROW(fe.decode_scale(Var(Matrix::Zero(5, 3)), Scale::kMid, 20),
               std::invalid_argument);
  FrontendConfig bad = toy_frontend();
  bad.filter_lengths_ms = {10.0, 5.0, 20.0};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Frontend, DecodeZeroAndOutputLength) {
  ParameterSet p;
  Rng rng(11);
  Frontend fe(p, toy_frontend(), rng);
  for (Scale s : kScales) {
    Var y = fe.decode_scale(Var(Matrix::Zero(10, 4)), s, 23);
    EXPECT_EQ(y.rows(), 23);
    EXPECT_EQ(y.cols(), 1);
    EXPECT_EQ(y.value().cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Frontend, UnitMaskRoundTripIsFiniteAndLengthPreserving) {
  ParameterSet p;
  Rng rng(12);
  Frontend fe(p, toy_frontend(), rng);
  Rng data(13);
  Waveform w = noise_waveform(97, data, 1600);
  auto f = fe.encode_multiscale(w);
  for (Scale s : kScales) {
    Var y = fe.decode_scale(f.scales[index_of(s)], s, w.size());
    ASSERT_EQ(y.rows(), 97);
    EXPECT_TRUE(y.value().allFinite());
  }
}

TEST(Frontend, DecoderIsLinear) {
  ParameterSet p;
  Rng rng(14);
  Frontend fe(p, toy_frontend(), rng);
  Rng data(15);
  Matrix x = random_matrix(12, 4, data), y = random_matrix(12, 4, data);
  const double a = 1.7, b = -0.4;
  for (Scale s : kScales) {
    Matrix lhs = fe.decode_scale(Var(Matrix(a * x + b * y)), s, 30).value();
    Matrix rhs = a * fe.decode_scale(Var(x), s, 30).value() +
                 b * fe.decode_scale(Var(y), s, 30).value();
    EXPECT_LE((lhs - rhs).norm(), 1e-5 * rhs.norm());
  }
}

TEST(Frontend, ParameterGroupNames) {
  ParameterSet p;
  Rng rng(16);
  Frontend fe(p, toy_frontend(), rng);
  for (const char* name : {"encoder.short.weight", "encoder.mid.weight",
                           "encoder.long.weight", "decoder.short.weight",
                           "decoder.mid.weight", "decoder.long.weight",
                           "bottleneck.proj.weight", "bottleneck.norm.gamma"}) {
    EXPECT_TRUE(p.contains(name)) << name;
  }
}

TEST(Frontend, EncoderDecoderGradients) {
  ParameterSet p;
  Rng rng(17);
  Frontend fe(p, toy_frontend(), rng);
  Rng data(18);
  // 22 samples -> T = 10 frames, C = 4 per scale.
  Var signal(random_matrix(22, 1, data), true);
  Matrix mask_w = random_matrix(10, 4, data).cwiseAbs();
  auto readout = testing::random_readout(22, 1, 19);
  auto loss = [&] {
    auto f = fe.encode_multiscale(signal);
    Var total = Var::scalar(0.0);
    for (Scale s : kScales) {
      Var masked = mul(f.scales[index_of(s)], Var(mask_w));
      total = add(total, readout(fe.decode_scale(masked, s, 22)));
    }
    Var b = fe.project_bottleneck(f.concat);
    return add(total, weighted_sum(b, Matrix::Constant(b.rows(), b.cols(), 0.3)));
  };
  auto wrt = testing::all_parameters(p);
  wrt.emplace_back("signal", signal);
  auto r = testing::check_gradients(loss, wrt);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

}  // namespace
}  // namespace tse
