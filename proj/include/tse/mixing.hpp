// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Power-controlled mixing of target, interfering and noise signals.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/waveform.hpp"

namespace tse {

enum class MixtureType { k2Mix, k3Mix, kNoisyMix };

inline std::string to_string(MixtureType t) {
  switch (t) {
    case MixtureType::k2Mix: return "2mix";
    case MixtureType::k3Mix: return "3mix";
    case MixtureType::kNoisyMix: return "noisymix";
  }
  return "unknown";
}

inline MixtureType parse_mixture_type(const std::string& s) {
  if (s == "2mix") return MixtureType::k2Mix;
  if (s == "3mix") return MixtureType::k3Mix;
  if (s == "noisymix") return MixtureType::kNoisyMix;
  throw std::invalid_argument("unknown mixture type: " + s);
}

// A waveform with its speaker identity.
struct Utterance {
  std::string speaker_id;
  std::string utterance_id;
  Waveform audio;
};

// One training or evaluation instance. Every waveform except `reference` is
// tail-padded to the mixture length.
struct MixtureExample {
  Waveform mixture;
  Waveform target;
  std::vector<Waveform> interferers;
  std::optional<Waveform> noise;
  Waveform reference;
  std::string target_speaker_id;
  double snr_db = 0.0;
  std::optional<double> noise_snr_db;
  MixtureType type = MixtureType::k2Mix;
};

struct MixResult {
  Waveform mixture;
  // At the interference's own (unpadded) length.
  Waveform scaled_interference;
  double gain = 1.0;
};

namespace detail {

inline void require_nonsilent(const Waveform& w, const char* what) {
  if (!(power(w) > 0.0)) {
    throw std::invalid_argument(std::string(what) + " has zero power");
  }
}

inline void require_same_rate(const Waveform& a, const Waveform& b) {
  if (a.sample_rate != b.sample_rate) {
    throw SampleRateMismatch("mixing signals at " +
                             std::to_string(a.sample_rate) + " Hz and " +
                             std::to_string(b.sample_rate) + " Hz");
  }
}

// Sum of waveforms, tail-padded to the longest.
inline Waveform padded_sum(const std::vector<const Waveform*>& parts) {
  std::size_t len = 0;
  for (const auto* p : parts) len = std::max(len, p->size());
  Waveform out = Waveform::zeros(len, parts.front()->sample_rate);
  for (const auto* p : parts) {
    for (std::size_t i = 0; i < p->size(); ++i) out.samples[i] += p->samples[i];
  }
  return out;
}

}  // namespace detail

// Gain that places `interference` at `snr_db` below the target power.
inline double gain_for_snr(double target_power, double interference_power,
                           double snr_db) {
  return std::sqrt(target_power / interference_power *
                   std::pow(10.0, -snr_db / 10.0));
}

// Scales the interference so that 10*log10(P_target / P_scaled) == snr_db and
// adds it to the unscaled target.
inline MixResult mix_at_snr(const Waveform& target,
                            const Waveform& interference, double snr_db) {
  detail::require_same_rate(target, interference);
  detail::require_nonsilent(target, "target");
  detail::require_nonsilent(interference, "interference");
  MixResult out;
  out.gain = gain_for_snr(power(target), power(interference), snr_db);
  out.scaled_interference = scaled(interference, out.gain);
  out.mixture = detail::padded_sum({&target, &out.scaled_interference});
  return out;
}

inline MixtureExample make_2mix(const Utterance& target,
                                const Utterance& interferer, double snr_db) {
  if (target.speaker_id == interferer.speaker_id) {
    throw std::invalid_argument("2-mix requires two distinct speakers, got " +
                                target.speaker_id + " twice");
  }
  auto mixed = mix_at_snr(target.audio, interferer.audio, snr_db);
  MixtureExample ex;
  ex.mixture = mixed.mixture;
  ex.target = fit_length(target.audio, ex.mixture.size());
  ex.interferers = {fit_length(mixed.scaled_interference, ex.mixture.size())};
  ex.target_speaker_id = target.speaker_id;
  ex.snr_db = snr_db;
  ex.type = MixtureType::k2Mix;
  return ex;
}

// Two interferers at equal power, their sum placed at `snr_db` relative to
// the target.
inline MixtureExample make_3mix(const Utterance& target,
                                const Utterance& interferer_a,
                                const Utterance& interferer_b, double snr_db) {
  if (target.speaker_id == interferer_a.speaker_id ||
      target.speaker_id == interferer_b.speaker_id ||
      interferer_a.speaker_id == interferer_b.speaker_id) {
    throw std::invalid_argument("3-mix requires three distinct speakers");
  }
  detail::require_same_rate(target.audio, interferer_a.audio);
  detail::require_same_rate(target.audio, interferer_b.audio);
  detail::require_nonsilent(interferer_a.audio, "interferer a");
  detail::require_nonsilent(interferer_b.audio, "interferer b");
  const Waveform& a = interferer_a.audio;
  const Waveform b =
      scaled(interferer_b.audio, std::sqrt(power(a) / power(interferer_b.audio)));
  const Waveform interference = detail::padded_sum({&a, &b});
  auto mixed = mix_at_snr(target.audio, interference, snr_db);

  MixtureExample ex;
  ex.mixture = mixed.mixture;
  const std::size_t len = ex.mixture.size();
  ex.target = fit_length(target.audio, len);
  ex.interferers = {fit_length(scaled(a, mixed.gain), len),
                    fit_length(scaled(b, mixed.gain), len)};
  ex.target_speaker_id = target.speaker_id;
  ex.snr_db = snr_db;
  ex.type = MixtureType::k3Mix;
  return ex;
}

// Loops or crops noise to `length` samples starting at `offset`.
inline Waveform fit_noise(const Waveform& noise, std::size_t length,
                          std::size_t offset = 0) {
  if (noise.empty()) throw std::invalid_argument("empty noise signal");
  Waveform out = Waveform::zeros(length, noise.sample_rate);
  for (std::size_t i = 0; i < length; ++i) {
    out.samples[i] = noise.samples[(offset + i) % noise.size()];
  }
  return out;
}

// Two-speaker mixture plus noise at `noise_snr_db` relative to the louder of
// the two (scaled) speakers. `noise` must already cover the mixture length;
// see fit_noise.
inline MixtureExample make_noisymix(const Utterance& target,
                                    const Utterance& interferer,
                                    const Waveform& noise, double snr_db,
                                    double noise_snr_db) {
  MixtureExample ex = make_2mix(target, interferer, snr_db);
  detail::require_same_rate(target.audio, noise);
  detail::require_nonsilent(noise, "noise");
  if (noise.size() < ex.mixture.size()) {
    throw std::invalid_argument("noise shorter than the speech mixture");
  }
  const Waveform segment = fit_length(noise, ex.mixture.size());
  detail::require_nonsilent(segment, "noise segment");
  const double p_target = power(target.audio);
  const double p_interferer = p_target * std::pow(10.0, -snr_db / 10.0);
  const double louder = std::max(p_target, p_interferer);
  const double g = gain_for_snr(louder, power(segment), noise_snr_db);
  ex.noise = scaled(segment, g);
  for (std::size_t i = 0; i < ex.mixture.size(); ++i) {
    ex.mixture.samples[i] += ex.noise->samples[i];
  }
  ex.noise_snr_db = noise_snr_db;
  ex.type = MixtureType::kNoisyMix;
  return ex;
}

enum class SegmentMode { kTrain, kEval };
enum class TailPolicy { kPad, kDrop };

// Training mode cuts fixed-length chunks; eval mode returns the waveform
// untouched.
inline std::vector<Waveform> segment(const Waveform& w, double length_s,
                                     SegmentMode mode,
                                     TailPolicy tail = TailPolicy::kPad) {
  if (!(length_s > 0.0)) {
    throw std::invalid_argument("segment length must be positive");
  }
  if (mode == SegmentMode::kEval) return {w};
  const auto n = static_cast<std::size_t>(std::llround(length_s * w.sample_rate));
  std::vector<Waveform> out;
  for (std::size_t start = 0; start < w.size(); start += n) {
    const std::size_t avail = std::min(n, w.size() - start);
    if (avail < n && tail == TailPolicy::kDrop) break;
    Waveform chunk = Waveform::zeros(n, w.sample_rate);
    std::copy_n(w.samples.begin() + static_cast<std::ptrdiff_t>(start), avail,
                chunk.samples.begin());
    out.push_back(std::move(chunk));
  }
  return out;
}

}  // namespace tse
