// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Multi-scale learned encoder/decoder and the bottleneck projection.

#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tse/json_util.hpp"
#include "tse/layers.hpp"
#include "tse/ops.hpp"
#include "tse/waveform.hpp"

namespace tse {

enum class Scale { kShort = 0, kMid = 1, kLong = 2 };

inline constexpr std::array<Scale, 3> kScales{Scale::kShort, Scale::kMid,
                                              Scale::kLong};

inline std::string to_string(Scale s) {
  switch (s) {
    case Scale::kShort: return "short";
    case Scale::kMid: return "mid";
    case Scale::kLong: return "long";
  }
  return "unknown";
}

inline std::size_t index_of(Scale s) { return static_cast<std::size_t>(s); }

struct FrontendConfig {
  int sample_rate = kDefaultSampleRate;
  std::array<double, 3> filter_lengths_ms{2.5, 10.0, 20.0};
  int channels_per_scale = 256;
  int bottleneck_dim = 256;
  // Frame shift in samples; 0 means half the shortest filter.
  int stride = 0;

  int filter_length(Scale s) const {
    return static_cast<int>(
        std::lround(filter_lengths_ms[index_of(s)] * sample_rate / 1000.0));
  }
  int hop() const { return stride > 0 ? stride : filter_length(Scale::kShort) / 2; }

  void validate() const {
    if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
    if (channels_per_scale <= 0 || bottleneck_dim <= 0) {
      throw ConfigError("frontend widths must be positive");
    }
    if (filter_length(Scale::kShort) < 2) {
      throw ConfigError("shortest filter must span at least 2 samples");
    }
    if (!(filter_length(Scale::kShort) < filter_length(Scale::kMid) &&
          filter_length(Scale::kMid) < filter_length(Scale::kLong))) {
      throw ConfigError("filter lengths must be strictly increasing");
    }
    if (hop() <= 0) throw ConfigError("stride must be positive");
  }
};

inline json to_json(const FrontendConfig& c) {
  return {{"filter_lengths_ms", c.filter_lengths_ms},
          {"channels_per_scale", c.channels_per_scale},
          {"bottleneck_dim", c.bottleneck_dim},
          {"stride", c.stride}};
}

inline FrontendConfig frontend_config_from_json(const json& j, int sample_rate) {
  FrontendConfig c;
  c.sample_rate = sample_rate;
  StrictObject o(j, "frontend");
  o.get("filter_lengths_ms", c.filter_lengths_ms);
  o.get("channels_per_scale", c.channels_per_scale);
  o.get("bottleneck_dim", c.bottleneck_dim);
  o.get("stride", c.stride);
  o.finish();
  c.validate();
  return c;
}

// Waveform as an [N x 1] graph input.
inline Var waveform_var(const Waveform& w) {
  Matrix m(static_cast<Eigen::Index>(w.size()), 1);
  for (std::size_t i = 0; i < w.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = w.samples[i];
  }
  return Var(std::move(m));
}

inline Waveform to_waveform(const Var& column, int sample_rate) {
  const auto& v = column.value();
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(v.data(), v.data() + v.size());
  return w;
}

struct MultiScaleFeatures {
  // Per-scale rectified encoder outputs, each [T x channels_per_scale].
  std::array<Var, 3> scales;
  // Channel-wise concatenation, [T x 3 * channels_per_scale].
  Var concat;
};

class Frontend {
 public:
  Frontend(ParameterSet& params, const FrontendConfig& config, Rng& rng)
      : config_(config) {
    config_.validate();
    const Eigen::Index c = config_.channels_per_scale;
    for (Scale s : kScales) {
      const Eigen::Index len = config_.filter_length(s);
      const double bound = 1.0 / std::sqrt(static_cast<double>(len));
      encoders_[index_of(s)] = params.add("encoder." + to_string(s) + ".weight",
                                          uniform_init(len, c, bound, rng));
      decoders_[index_of(s)] =
          params.add("decoder." + to_string(s) + ".weight",
                     uniform_init(c, len, 1.0 / std::sqrt(static_cast<double>(c)),
                                  rng));
    }
    bottleneck_norm_ = LayerNorm(params, "bottleneck.norm", 3 * c);
    bottleneck_proj_ =
        Linear(params, "bottleneck.proj", 3 * c, config_.bottleneck_dim, rng);
  }

  const FrontendConfig& config() const { return config_; }

  // Frames produced for an input of `num_samples` samples (same at every
  // scale).
  Eigen::Index frame_count(std::size_t num_samples) const {
    const auto shortest = static_cast<std::size_t>(config_.filter_length(Scale::kShort));
    if (num_samples < shortest) {
      throw std::invalid_argument(
          "input of " + std::to_string(num_samples) +
          " samples is shorter than the shortest filter (" +
          std::to_string(shortest) + ")");
    }
    return static_cast<Eigen::Index>((num_samples - shortest) /
                                     static_cast<std::size_t>(config_.hop())) +
           1;
  }

  // Longer filters see the input zero-padded by this many samples at the
  // front (and the remainder at the back) so that every scale yields the same
  // frame count.
  Eigen::Index front_padding(Scale s) const {
    return (config_.filter_length(s) - config_.filter_length(Scale::kShort)) / 2;
  }

  Var encode_scale(const Var& signal, Scale s) const {
    const Eigen::Index frames = frame_count(static_cast<std::size_t>(signal.rows()));
    Var windows = frame_signal(signal, config_.filter_length(s), config_.hop(),
                               front_padding(s), frames);
    return relu(matmul(windows, encoders_[index_of(s)]));
  }

  Var encode_scale(const Waveform& w, Scale s) const {
    return encode_scale(waveform_var(w), s);
  }

  MultiScaleFeatures encode_multiscale(const Var& signal) const {
    MultiScaleFeatures out;
    for (Scale s : kScales) out.scales[index_of(s)] = encode_scale(signal, s);
    out.concat = concat_cols({out.scales[0], out.scales[1], out.scales[2]});
    return out;
  }

  MultiScaleFeatures encode_multiscale(const Waveform& w) const {
    return encode_multiscale(waveform_var(w));
  }

  Var project_bottleneck(const Var& features) const {
    if (features.cols() != 3 * config_.channels_per_scale) {
      throw std::invalid_argument(
          "bottleneck expects " + std::to_string(3 * config_.channels_per_scale) +
          " channels, got " + std::to_string(features.cols()));
    }
    return bottleneck_proj_(bottleneck_norm_(features));
  }

  // Transposed convolution: each frame contributes its basis-weighted filter
  // at the shared stride; the result is cropped to `output_length`.
  Var decode_scale(const Var& masked, Scale s, std::size_t output_length) const {
    if (masked.cols() != config_.channels_per_scale) {
      throw std::invalid_argument(
          "decoder expects " + std::to_string(config_.channels_per_scale) +
          " channels, got " + std::to_string(masked.cols()));
    }
    Var frames = matmul(masked, decoders_[index_of(s)]);
    return overlap_add(frames, config_.hop(), front_padding(s),
                       static_cast<Eigen::Index>(output_length));
  }

  const Var& encoder_weight(Scale s) const { return encoders_[index_of(s)]; }
  const Var& decoder_weight(Scale s) const { return decoders_[index_of(s)]; }
  const Linear& bottleneck_projection() const { return bottleneck_proj_; }

 private:
  FrontendConfig config_;
  std::array<Var, 3> encoders_;
  std::array<Var, 3> decoders_;
  LayerNorm bottleneck_norm_;
  Linear bottleneck_proj_;
};

}  // namespace tse
