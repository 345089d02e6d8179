// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Checkpoint archive layout (all integers little-endian):
//
//   magic        8 bytes  "TSECKPT1"
//   header_len   u64
//   header       header_len bytes of UTF-8 JSON: architecture, stacks,
//                config_hash, config, epoch, dev_loss, rng_state, speakers
//   count        u64      number of tensors
//   per tensor:  u32 name_len, name bytes, u64 rows, u64 cols,
//                rows*cols IEEE-754 float64 values in row-major order
//
// Tensor names are the model's parameter and buffer names, e.g.
// "encoder.short.weight" or "separator.stack1.conformer.conv.bn.running_mean".

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/config.hpp"
#include "tse/model.hpp"

namespace tse {

inline constexpr char kCheckpointMagic[8] = {'T', 'S', 'E', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
  RunConfig config;
  int epoch = 0;
  double dev_loss = 0.0;
  std::string rng_state;
  // Speaker labels in speaker-head order.
  std::vector<std::string> speakers;
  std::map<std::string, Matrix> tensors;
};

inline Checkpoint make_checkpoint(const SpeakerExtractor& model,
                                  std::vector<std::string> speakers, int epoch,
                                  double dev_loss, std::string rng_state = {}) {
  Checkpoint c;
  c.config = model.config();
  c.epoch = epoch;
  c.dev_loss = dev_loss;
  c.rng_state = std::move(rng_state);
  c.speakers = std::move(speakers);
  c.tensors = model.params().state();
  return c;
}

inline json checkpoint_header(const Checkpoint& c) {
  return {{"architecture", to_string(c.config.separator.architecture)},
          {"stacks", c.config.separator.stacks},
          {"config_hash", config_hash(c.config)},
          {"config", to_json(c.config)},
          {"epoch", c.epoch},
          {"dev_loss", c.dev_loss},
          {"rng_state", c.rng_state},
          {"speakers", c.speakers}};
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path.string());
  const std::string header = checkpoint_header(c).dump();
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint64_t>(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  detail::put<std::uint64_t>(os, c.tensors.size());
  for (const auto& [name, m] : c.tensors) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  auto fail = [&](const std::string& what) {
    return std::runtime_error("corrupt checkpoint " + path.string() + ": " + what);
  };
  auto read_u64 = [&]() {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) throw fail("truncated");
    return v;
  };
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw fail("bad magic");
  }
  const std::uint64_t header_len = read_u64();
  if (header_len > (1u << 26)) throw fail("implausible header length");
  std::string header(header_len, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(header_len))) {
    throw fail("truncated header");
  }
  json h = json::parse(header);
  Checkpoint c;
  c.config = run_config_from_json(h.at("config"));
  if (h.at("config_hash").get<std::string>() != config_hash(c.config)) {
    throw fail("config hash does not match the stored config");
  }
  c.epoch = h.at("epoch").get<int>();
  c.dev_loss = h.at("dev_loss").get<double>();
  c.rng_state = h.value("rng_state", "");
  c.speakers = h.at("speakers").get<std::vector<std::string>>();

  const std::uint64_t count = read_u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t name_len = 0;
    if (!is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len))) {
      throw fail("truncated tensor entry");
    }
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw fail("truncated tensor name");
    const std::uint64_t rows = read_u64();
    const std::uint64_t cols = read_u64();
    if (rows * cols > (std::uint64_t{1} << 32)) throw fail("implausible tensor size");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!is.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw fail("truncated tensor data for " + name);
    }
    c.tensors.emplace(std::move(name), std::move(m));
  }
  return c;
}

// Rebuilds the model described by a checkpoint and loads its tensors.
inline std::unique_ptr<SpeakerExtractor> restore_model(const Checkpoint& c) {
  auto model = std::make_unique<SpeakerExtractor>(
      c.config, static_cast<int>(c.speakers.size()), 0);
  model->params().load_state(c.tensors);
  return model;
}

}  // namespace tse
