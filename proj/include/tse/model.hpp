// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// The complete extraction system: shared multi-scale frontend, speaker
// embedder and head, separator trunk and mask heads.

#pragma once

#include <array>
#include <memory>
#include <stdexcept>
#include <string>

#include "tse/config.hpp"
#include "tse/embedder.hpp"
#include "tse/frontend.hpp"
#include "tse/layers.hpp"
#include "tse/separator.hpp"
#include "tse/waveform.hpp"

namespace tse {

struct ModelOutput {
  // Decoder outputs per scale, each [N x 1] at the mixture length.
  std::array<Var, 3> estimates;
  Var logits;
  Var embedding;
  std::array<Var, 3> masks;
};

class SpeakerExtractor {
 public:
  SpeakerExtractor(const RunConfig& config, int n_speakers, std::uint64_t seed)
      : config_(config) {
    config_.validate();
    Rng rng(derive_seed(seed, 0x1417));
    frontend_ = std::make_unique<Frontend>(params_, config_.frontend, rng);
    embedder_ = std::make_unique<SpeakerEmbedder>(
        params_, config_.embedder, config_.frontend.bottleneck_dim, rng);
    head_ = std::make_unique<SpeakerHead>(params_, config_.embedder.embedding_dim,
                                          n_speakers, rng);
    separator_ = make_separator(params_, config_.separator,
                                config_.frontend.bottleneck_dim,
                                config_.embedder.embedding_dim, rng);
    masks_ = std::make_unique<MaskHeads>(params_, config_.frontend.bottleneck_dim,
                                         config_.frontend.channels_per_scale, rng);
  }

  SpeakerExtractor(const SpeakerExtractor&) = delete;
  SpeakerExtractor& operator=(const SpeakerExtractor&) = delete;

  const RunConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const Frontend& frontend() const { return *frontend_; }
  const SpeakerEmbedder& embedder() const { return *embedder_; }
  const SeparatorStack& separator() const { return *separator_; }
  SpeakerHead& speaker_head() { return *head_; }
  MaskHeads& mask_heads() { return *masks_; }
  int n_speakers() const { return head_->n_speakers(); }

  // Shortest input the model accepts for the reference speech.
  std::size_t min_reference_samples() const {
    return static_cast<std::size_t>(config_.frontend.filter_length(Scale::kLong));
  }

  // Reference speech -> [1 x embedding_dim].
  Var embed(const Waveform& reference, const ForwardContext& ctx) const {
    check_rate(reference);
    if (reference.size() < min_reference_samples()) {
      throw std::invalid_argument(
          "reference of " + std::to_string(reference.size()) +
          " samples is shorter than the longest filter (" +
          std::to_string(min_reference_samples()) + ")");
    }
    auto features = frontend_->encode_multiscale(reference);
    return (*embedder_)(frontend_->project_bottleneck(features.concat), ctx);
  }

  Var classify(const Var& embedding) const { return (*head_)(embedding); }

  ModelOutput forward(const Waveform& mixture, const Waveform& reference,
                      const ForwardContext& ctx) const {
    check_rate(mixture);
    ModelOutput out;
    out.embedding = embed(reference, ctx);
    out.logits = classify(out.embedding);
    auto encoded = frontend_->encode_multiscale(mixture);
    Var y = (*separator_)(frontend_->project_bottleneck(encoded.concat),
                          out.embedding, ctx);
    out.masks = (*masks_)(y);
    for (Scale s : kScales) {
      const std::size_t i = index_of(s);
      out.estimates[i] = frontend_->decode_scale(
          mul(out.masks[i], encoded.scales[i]), s, mixture.size());
    }
    return out;
  }

  // Eval-mode extraction; the shortest-filter decoder output is the system
  // output.
  Waveform extract(const Waveform& mixture, const Waveform& reference) const {
    NoGradGuard no_grad;
    ForwardContext ctx;
    auto out = forward(mixture, reference, ctx);
    return to_waveform(out.estimates[index_of(Scale::kShort)],
                       mixture.sample_rate);
  }

 private:
  void check_rate(const Waveform& w) const {
    if (w.sample_rate != config_.sample_rate) {
      throw SampleRateMismatch("input at " + std::to_string(w.sample_rate) +
                               " Hz, model expects " +
                               std::to_string(config_.sample_rate) + " Hz");
    }
  }

  RunConfig config_;
  ParameterSet params_;
  std::unique_ptr<Frontend> frontend_;
  std::unique_ptr<SpeakerEmbedder> embedder_;
  std::unique_ptr<SpeakerHead> head_;
  std::unique_ptr<SeparatorStack> separator_;
  std::unique_ptr<MaskHeads> masks_;
};

}  // namespace tse
