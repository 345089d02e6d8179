// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

#include "tse/config.hpp"
#include "tse/random.hpp"
#include "tse/waveform.hpp"

namespace tse::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "tse_test_XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) {
      throw std::runtime_error("mkdtemp failed");
    }
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline Waveform noise_waveform(std::size_t n, Rng& rng, int rate = kDefaultSampleRate,
                               double scale = 0.1) {
  Waveform w = Waveform::zeros(n, rate);
  for (auto& v : w.samples) v = scale * rng.normal();
  return w;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

// Tiny model dimensions for fast tests: 1.6 kHz audio, filters of 4/16/32
// samples, model width 8.
inline RunConfig toy_run_config(Architecture arch = Architecture::kTcnConformer,
                                int stacks = 1) {
  RunConfig c;
  c.sample_rate = 1600;
  c.simulation.sample_rate = 1600;
  c.frontend.sample_rate = 1600;
  c.frontend.channels_per_scale = 4;
  c.frontend.bottleneck_dim = 4;
  c.embedder.block_dims = {{4, 4}, {4, 6}, {6, 6}};
  c.embedder.embedding_dim = 4;
  c.separator.architecture = arch;
  c.separator.stacks = stacks;
  c.separator.model_dim = 8;
  c.separator.heads = 2;
  c.separator.conv_kernel = 3;
  c.separator.dropout = 0.0;
  c.separator.tcn_hidden = 6;
  c.separator.baseline_stacks = 1;
  c.separator.baseline_blocks = 2;
  c.training.epochs = 3;
  c.training.early_stop_patience = 2;
  c.training.segment_s = 0.05;
  c.training.batch_size = 2;
  c.validate();
  return c;
}

}  // namespace tse::testing
