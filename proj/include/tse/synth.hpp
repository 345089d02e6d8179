// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Synthetic voiced "speech" for toy corpora: each speaker has its own pitch
// range and formant set, utterances are trains of harmonic syllables.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/random.hpp"
#include "tse/waveform.hpp"

namespace tse {

struct SyntheticSpeaker {
  std::string id;
  double f0 = 120.0;
  std::array<double, 3> formants{500.0, 1500.0, 2500.0};
  double formant_bandwidth = 150.0;
  double vibrato_hz = 5.0;
};

inline SyntheticSpeaker make_synthetic_speaker(int index, Rng& rng) {
  SyntheticSpeaker s;
  char id[16];
  std::snprintf(id, sizeof(id), "spk%02d", index);
  s.id = id;
  // Spread base pitches so speakers stay separable in frequency.
  s.f0 = 90.0 * std::pow(1.45, index % 6) * rng.uniform(0.95, 1.05);
  s.formants = {rng.uniform(300.0, 900.0), rng.uniform(1000.0, 2000.0),
                rng.uniform(2200.0, 3200.0)};
  s.formant_bandwidth = rng.uniform(100.0, 250.0);
  s.vibrato_hz = rng.uniform(3.0, 7.0);
  return s;
}

inline Waveform synthesize_utterance(const SyntheticSpeaker& spk, double duration_s,
                                     int sample_rate, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  Waveform w = Waveform::zeros(n, sample_rate);
  const double nyquist = 0.5 * sample_rate;
  const double dt = 1.0 / sample_rate;
  std::size_t pos = static_cast<std::size_t>(rng.uniform(0.0, 0.03) * sample_rate);
  while (pos < n) {
    const auto syl = static_cast<std::size_t>(rng.uniform(0.12, 0.25) * sample_rate);
    const double pitch = spk.f0 * rng.uniform(0.9, 1.1);
    const double glide = rng.uniform(-0.15, 0.15);
    const double amp = rng.uniform(0.6, 1.0);
    double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < syl && pos + i < n; ++i) {
      const double t = static_cast<double>(i) * dt;
      const double frac = static_cast<double>(i) / static_cast<double>(syl);
      const double f = pitch * (1.0 + glide * frac) *
                       (1.0 + 0.02 * std::sin(2.0 * std::numbers::pi * spk.vibrato_hz * t));
      phase += 2.0 * std::numbers::pi * f * dt;
      double v = 0.0;
      for (int k = 1; k * f < nyquist; ++k) {
        double gain = 0.0;
        for (double fm : spk.formants) {
          const double x = (k * f - fm) / spk.formant_bandwidth;
          gain += 1.0 / (1.0 + x * x);
        }
        v += gain * std::sin(k * phase) / std::sqrt(static_cast<double>(k));
      }
      const double env = std::sin(std::numbers::pi * frac);
      w.samples[pos + i] += amp * env * env * v;
    }
    pos += syl + static_cast<std::size_t>(rng.uniform(0.02, 0.06) * sample_rate);
  }
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    const double g = rng.uniform(0.3, 0.6) / peak;
    for (double& v : w.samples) v *= g;
  }
  return w;
}

// Low-passed Gaussian noise.
inline Waveform synthesize_noise(double duration_s, int sample_rate, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  Waveform w = Waveform::zeros(n, sample_rate);
  double state = 0.0;
  for (auto& v : w.samples) {
    state = 0.8 * state + 0.2 * rng.normal();
    v = 0.3 * state;
  }
  return w;
}

struct ToyCorpusOptions {
  int speakers = 2;
  int utterances_per_speaker = 3;
  double min_duration_s = 0.5;
  double max_duration_s = 0.7;
  int noise_files = 0;
  int sample_rate = 8000;
  std::uint64_t seed = 0;
};

struct ToyCorpusFiles {
  std::filesystem::path speech_index;
  std::filesystem::path noise_index;  // empty when no noise was written
};

// Writes speaker audio under `dir` plus "speech.txt" ("speaker path" lines)
// and, when noise is requested, "noise.txt".
inline ToyCorpusFiles write_toy_corpus(const std::filesystem::path& dir,
                                       const ToyCorpusOptions& opts) {
  namespace fs = std::filesystem;
  if (opts.speakers < 1 || opts.utterances_per_speaker < 1) {
    throw std::invalid_argument("toy corpus needs at least one speaker and utterance");
  }
  if (!(opts.min_duration_s > 0.0) || opts.max_duration_s < opts.min_duration_s) {
    throw std::invalid_argument("invalid toy utterance duration range");
  }
  fs::create_directories(dir);
  ToyCorpusFiles files{dir / "speech.txt", {}};
  std::ofstream index(files.speech_index);
  index << "# speaker path\n";
  for (int s = 0; s < opts.speakers; ++s) {
    Rng rng(derive_seed(opts.seed, 0x5A7, static_cast<std::uint64_t>(s)));
    const auto spk = make_synthetic_speaker(s, rng);
    for (int u = 0; u < opts.utterances_per_speaker; ++u) {
      const double dur = rng.uniform(opts.min_duration_s, opts.max_duration_s);
      char name[64];
      std::snprintf(name, sizeof(name), "%s/%s_u%02d.wav", spk.id.c_str(),
                    spk.id.c_str(), u);
      write_wav(dir / name, synthesize_utterance(spk, dur, opts.sample_rate, rng));
      index << spk.id << '\t' << name << '\n';
    }
  }
  if (opts.noise_files > 0) {
    files.noise_index = dir / "noise.txt";
    std::ofstream noise(files.noise_index);
    Rng rng(derive_seed(opts.seed, 0x401));
    for (int i = 0; i < opts.noise_files; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "noise/n%02d.wav", i);
      write_wav(dir / name, synthesize_noise(opts.max_duration_s * 1.5,
                                             opts.sample_rate, rng));
      noise << name << '\n';
    }
  }
  return files;
}

}  // namespace tse
