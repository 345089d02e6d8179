// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Command-line front end: simulate, train, extract, evaluate, toy-corpus.
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#pragma once

#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tse/checkpoint.hpp"
#include "tse/config.hpp"
#include "tse/corpus.hpp"
#include "tse/synth.hpp"
#include "tse/training.hpp"

namespace tse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace fs = std::filesystem;

inline RunConfig config_or_default(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return load_run_config(path);
}

struct SimulateArgs {
  std::string config;
  std::string clean_index;
  std::string noise_index;
  std::string out_dir;
  std::uint64_t seed = 0;
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const RunConfig cfg = config_or_default(a.config);
  const SpeechIndex speech = read_speech_index(a.clean_index);
  const NoiseIndex noise =
      a.noise_index.empty() ? NoiseIndex{} : read_noise_index(a.noise_index);
  const auto manifests =
      simulate_corpus(speech, noise, cfg.simulation, a.seed, a.out_dir, to_json(cfg));
  for (const auto& [split, m] : manifests) {
    out << split << ": " << m.entries.size() << " mixtures -> "
        << (fs::path(a.out_dir) / (split + ".jsonl")).string() << '\n';
  }
  out << "config_hash " << config_hash(cfg) << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> train_manifests;
  std::string dev_manifest;
  std::string out;
  std::string architecture;
  int stacks = 0;
  std::optional<std::uint64_t> seed;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = config_or_default(a.config);
  if (!a.architecture.empty()) cfg.separator.architecture = parse_architecture(a.architecture);
  if (a.stacks > 0) cfg.separator.stacks = a.stacks;
  if (a.seed) cfg.training.seed = *a.seed;
  cfg.validate();

  std::vector<CorpusManifest> train_sets;
  for (const auto& p : a.train_manifests) train_sets.push_back(read_manifest(p));
  const CorpusManifest dev = read_manifest(a.dev_manifest);

  TrainOptions opts;
  opts.log = &out;
  const fs::path out_path(a.out);
  opts.dump_dir = out_path.parent_path() / (out_path.stem().string() + "_nonfinite");
  out << "architecture " << to_string(cfg.separator.architecture) << ", stacks "
      << cfg.separator.stacks << ", config_hash " << config_hash(cfg) << '\n';
  const TrainResult result = train(train_sets, dev, cfg, opts);
  save_checkpoint(out_path, result.best);
  out << "best epoch " << result.best.epoch << " (dev loss " << result.best.dev_loss
      << ") after " << result.epochs_run << " epochs, " << result.steps
      << " steps -> " << out_path.string() << '\n';
  return kExitOk;
}

struct ExtractArgs {
  std::string checkpoint;
  std::string mixture;
  std::string reference;
  std::string out;
};

inline int cmd_extract(const ExtractArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const int rate = ckpt.config.sample_rate;
  const Waveform mixture = read_wav(a.mixture, rate);
  const Waveform reference = read_wav(a.reference, rate);
  const Waveform estimate = extract(ckpt, mixture, reference);
  const std::string hash = config_hash(ckpt.config);
  write_wav(a.out, estimate, WavEncoding::kFloat32, "config_hash=" + hash);
  out << a.out << " (" << estimate.size() << " samples, config_hash " << hash << ")\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string test_manifest;
  std::string report;
};

inline int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const CorpusManifest manifest = read_manifest(a.test_manifest);
  const EvaluationReport report = evaluate(ckpt, manifest);
  write_report(a.report, report);
  char line[160];
  for (const auto& [type, s] : report.summary()) {
    std::snprintf(line, sizeof(line),
                  "%-8s n=%-4zu input mixture %7.2f dB   %s %7.2f dB (+%.2f)\n",
                  to_string(type).c_str(), s.count, s.mean_input_si_sdr_db,
                  report.system.c_str(), s.mean_si_sdr_db, s.mean_improvement_db);
    out << line;
  }
  out << "report -> " << a.report << '\n';
  return kExitOk;
}

struct ToyArgs {
  std::string out_dir;
  ToyCorpusOptions options;
};

inline int cmd_toy_corpus(const ToyArgs& a, std::ostream& out) {
  const auto files = write_toy_corpus(a.out_dir, a.options);
  out << "speech index " << files.speech_index.string() << '\n';
  if (!files.noise_index.empty()) out << "noise index " << files.noise_index.string() << '\n';
  return kExitOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Time-domain target speaker extraction toolkit", "tse"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate 2-mix/3-mix/noisy-mix corpora");
  simulate->add_option("--config", sim.config, "Run config (JSON)")->check(CLI::ExistingFile);
  simulate->add_option("--clean-index", sim.clean_index, "Clean speech index file")
      ->required();
  simulate->add_option("--noise-index", sim.noise_index, "Noise index file");
  simulate->add_option("--out-dir", sim.out_dir, "Output directory")->required();
  simulate->add_option("--seed", sim.seed, "Simulation seed");

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train embedder and separator jointly");
  train_cmd->add_option("--config", tr.config, "Run config (JSON)")->check(CLI::ExistingFile);
  train_cmd->add_option("--train-manifest", tr.train_manifests,
                        "Training manifest(s); several are concatenated")
      ->required();
  train_cmd->add_option("--dev-manifest", tr.dev_manifest, "Dev manifest")->required();
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--architecture", tr.architecture, "Separator architecture")
      ->check(CLI::IsMember({"tcn_baseline", "conformer_ffn", "tcn_conformer"}));
  train_cmd->add_option("--stacks", tr.stacks, "Number of stacks")
      ->check(CLI::Range(1, 64));
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Training seed");

  ExtractArgs ex;
  auto* extract_cmd = app.add_subcommand("extract", "Extract the target speaker");
  extract_cmd->add_option("--checkpoint", ex.checkpoint)->required();
  extract_cmd->add_option("--mixture", ex.mixture)->required();
  extract_cmd->add_option("--reference", ex.reference)->required();
  extract_cmd->add_option("--out", ex.out)->required();

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a checkpoint on a manifest");
  evaluate_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  evaluate_cmd->add_option("--test-manifest", ev.test_manifest)->required();
  evaluate_cmd->add_option("--report", ev.report)->required();

  ToyArgs toy;
  auto* toy_cmd = app.add_subcommand("toy-corpus", "Write a synthetic clean-speech corpus");
  toy_cmd->add_option("--out-dir", toy.out_dir)->required();
  toy_cmd->add_option("--speakers", toy.options.speakers)->check(CLI::Range(1, 1000));
  toy_cmd->add_option("--utterances", toy.options.utterances_per_speaker)
      ->check(CLI::Range(1, 1000));
  toy_cmd->add_option("--noise-files", toy.options.noise_files)->check(CLI::Range(0, 1000));
  toy_cmd->add_option("--sample-rate", toy.options.sample_rate)
      ->check(CLI::Range(1000, 192000));
  toy_cmd->add_option("--min-duration", toy.options.min_duration_s);
  toy_cmd->add_option("--max-duration", toy.options.max_duration_s);
  toy_cmd->add_option("--seed", toy.options.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help requests print the help of the subcommand they were given to.
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim, out);
    if (train_cmd->parsed()) {
      if (seed_opt->count() > 0) tr.seed = train_seed;
      return cmd_train(tr, out);
    }
    if (extract_cmd->parsed()) return cmd_extract(ex, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(ev, out);
    if (toy_cmd->parsed()) return cmd_toy_corpus(toy, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace tse::cli
