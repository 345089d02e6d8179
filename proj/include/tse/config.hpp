// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// The hierarchical run configuration shared by every command.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "tse/corpus.hpp"
#include "tse/embedder.hpp"
#include "tse/frontend.hpp"
#include "tse/json_util.hpp"
#include "tse/objectives.hpp"
#include "tse/separator.hpp"

namespace tse {

struct TrainConfig {
  int epochs = 150;
  int early_stop_patience = 6;
  double segment_s = 4.0;
  double learning_rate = 1e-3;
  // Halve the learning rate after this many epochs without dev improvement.
  int lr_halving_patience = 2;
  double gradient_clip_norm = 5.0;
  int batch_size = 8;
  std::uint64_t seed = 0;
  // Hard cap on optimizer steps; 0 disables it.
  int max_steps = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (early_stop_patience < 1 || early_stop_patience >= epochs) {
      throw ConfigError("early_stop_patience must be in [1, epochs)");
    }
    if (!(segment_s > 0.0)) throw ConfigError("segment_s must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (lr_halving_patience < 1) throw ConfigError("lr_halving_patience must be >= 1");
    if (!(gradient_clip_norm > 0.0)) {
      throw ConfigError("gradient_clip_norm must be positive");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  }
};

inline json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"segment_s", c.segment_s},
          {"learning_rate", c.learning_rate},
          {"lr_halving_patience", c.lr_halving_patience},
          {"gradient_clip_norm", c.gradient_clip_norm},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"max_steps", c.max_steps},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  StrictObject o(j, "training");
  o.get("epochs", c.epochs);
  o.get("early_stop_patience", c.early_stop_patience);
  o.get("segment_s", c.segment_s);
  o.get("learning_rate", c.learning_rate);
  o.get("lr_halving_patience", c.lr_halving_patience);
  o.get("gradient_clip_norm", c.gradient_clip_norm);
  o.get("batch_size", c.batch_size);
  o.get("seed", c.seed);
  o.get("max_steps", c.max_steps);
  o.get("adam_beta1", c.adam_beta1);
  o.get("adam_beta2", c.adam_beta2);
  o.get("adam_epsilon", c.adam_epsilon);
  o.finish();
  c.validate();
  return c;
}

struct RunConfig {
  int sample_rate = kDefaultSampleRate;
  SimulationConfig simulation;
  FrontendConfig frontend;
  EmbedderConfig embedder;
  SeparatorConfig separator;
  ObjectiveConfig objectives;
  TrainConfig training;

  // Cross-module consistency.
  void validate() const {
    if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
    if (frontend.sample_rate != sample_rate ||
        simulation.sample_rate != sample_rate) {
      throw ConfigError("module sample rates disagree with signal.sample_rate");
    }
    simulation.validate();
    frontend.validate();
    embedder.validate(frontend.bottleneck_dim);
    separator.validate(frontend.bottleneck_dim, embedder.embedding_dim);
    objectives.weights.validate();
    training.validate();
  }
};

inline json to_json(const RunConfig& c) {
  return {{"signal",
           {{"sample_rate", c.sample_rate}, {"simulation", to_json(c.simulation)}}},
          {"frontend", to_json(c.frontend)},
          {"embedder", to_json(c.embedder)},
          {"separator", to_json(c.separator)},
          {"objectives", to_json(c.objectives)},
          {"training", to_json(c.training)}};
}

// Unknown keys anywhere in the document are rejected; missing keys keep
// their defaults.
inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  StrictObject root(j, "config");
  const json signal = root.child("signal");
  {
    StrictObject o(signal, "signal");
    o.get("sample_rate", c.sample_rate);
    c.simulation =
        simulation_config_from_json(o.child("simulation"), "signal.simulation",
                                    c.sample_rate);
    o.finish();
  }
  c.frontend = frontend_config_from_json(root.child("frontend"), c.sample_rate);
  c.embedder = embedder_config_from_json(root.child("embedder"));
  c.separator = separator_config_from_json(root.child("separator"));
  c.objectives = objective_config_from_json(root.child("objectives"));
  c.training = train_config_from_json(root.child("training"));
  root.finish();
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline std::string config_hash(const RunConfig& c) {
  return fnv1a_hex(to_json(c).dump());
}

}  // namespace tse
