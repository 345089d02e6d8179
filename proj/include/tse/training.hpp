// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Joint training of embedder and separator, dev-set model selection, and
// corpus evaluation.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/checkpoint.hpp"
#include "tse/config.hpp"
#include "tse/corpus.hpp"
#include "tse/model.hpp"
#include "tse/objectives.hpp"

namespace tse {

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Adam with bias correction.
class Adam {
 public:
  Adam(ParameterSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, v] : params_.params()) {
      first_.emplace(name, Matrix::Zero(v.rows(), v.cols()));
      second_.emplace(name, Matrix::Zero(v.rows(), v.cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (const auto& [name, v] : params_.params()) {
      if (!v.has_grad()) continue;
      Matrix& m = first_.at(name);
      Matrix& s = second_.at(name);
      const Matrix& g = v.grad();
      m = beta1_ * m + (1.0 - beta1_) * g;
      s = beta2_ * s + (1.0 - beta2_) * g.cwiseProduct(g);
      Var p = v;
      p.mutable_value().array() -=
          lr_ * (m.array() / c1) / ((s.array() / c2).sqrt() + eps_);
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  int steps() const { return t_; }

 private:
  ParameterSet& params_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  int t_ = 0;
  std::map<std::string, Matrix> first_;
  std::map<std::string, Matrix> second_;
};

inline double global_grad_norm(const ParameterSet& params) {
  double sq = 0.0;
  for (const auto& [_, v] : params.params()) {
    if (v.has_grad()) sq += v.grad().squaredNorm();
  }
  return std::sqrt(sq);
}

// Rescales all gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
inline double clip_grad_norm(ParameterSet& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& [_, v] : params.params()) {
      if (v.has_grad()) v.node()->grad *= s;
    }
  }
  return norm;
}

// Tracks the best dev loss; stops after `patience` epochs without strict
// improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Returns true when `dev_loss` is a new best.
  bool update(double dev_loss) {
    ++epoch_;
    if (dev_loss < best_loss_) {
      best_loss_ = dev_loss;
      best_epoch_ = epoch_;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  int stale_epochs() const { return stale_; }
  int epoch() const { return epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct LoadedExample {
  std::string utterance_id;
  MixtureType type = MixtureType::k2Mix;
  Waveform mixture;
  Waveform target;
  Waveform reference;
  std::string speaker_id;
  // Speaker-head class, or -1 for speakers unseen in training.
  int label = -1;
};

inline std::vector<LoadedExample> load_examples(
    const CorpusManifest& manifest, int sample_rate,
    const std::map<std::string, int>& labels = {}) {
  std::vector<LoadedExample> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    LoadedExample ex;
    ex.utterance_id = e.utterance_id;
    ex.type = e.mixture_type;
    ex.mixture = read_wav(manifest.resolve(e.mixture_path), sample_rate);
    ex.target = fit_length(read_wav(manifest.resolve(e.target_path), sample_rate),
                           ex.mixture.size());
    ex.reference = read_wav(manifest.resolve(e.reference_path), sample_rate);
    ex.speaker_id = e.speaker_id;
    auto it = labels.find(e.speaker_id);
    ex.label = it == labels.end() ? -1 : it->second;
    out.push_back(std::move(ex));
  }
  return out;
}

// Sorted speaker ids of the training data; the index is the class label.
inline std::vector<std::string> speaker_labels(
    const std::vector<CorpusManifest>& manifests) {
  std::set<std::string> ids;
  for (const auto& m : manifests) {
    for (const auto& e : m.entries) ids.insert(e.speaker_id);
  }
  return {ids.begin(), ids.end()};
}

namespace detail {

inline Waveform crop(const Waveform& w, std::size_t start, std::size_t length) {
  Waveform out = Waveform::zeros(length, w.sample_rate);
  for (std::size_t i = 0; i < length && start + i < w.size(); ++i) {
    out.samples[i] = w.samples[start + i];
  }
  return out;
}

// Random aligned training segment of mixture and target. Crops whose target
// part is silent are redrawn.
inline std::pair<Waveform, Waveform> training_segment(const LoadedExample& ex,
                                                      std::size_t length, Rng& rng) {
  if (ex.mixture.size() <= length) {
    return {fit_length(ex.mixture, length), fit_length(ex.target, length)};
  }
  const std::size_t span = ex.mixture.size() - length + 1;
  std::size_t start = 0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    start = rng.index(span);
    if (power(crop(ex.target, start, length)) > 0.0) break;
    start = 0;
  }
  return {crop(ex.mixture, start, length), crop(ex.target, start, length)};
}

inline Waveform training_reference(const Waveform& ref, std::size_t length,
                                   std::size_t min_length, Rng& rng) {
  const std::size_t len = std::max(length, min_length);
  if (ref.size() <= len) return ref;
  return crop(ref, rng.index(ref.size() - len + 1), len);
}

}  // namespace detail

struct TrainOptions {
  std::ostream* log = nullptr;
  // Where to dump the offending segment when a loss turns non-finite.
  std::filesystem::path dump_dir;
};

struct TrainResult {
  Checkpoint best;
  std::vector<double> dev_losses;
  // Mean training loss of every optimizer step.
  std::vector<double> step_losses;
  int epochs_run = 0;
  int steps = 0;
  bool early_stopped = false;
};

// Mean multi-scale SI-SNR loss over full utterances, eval mode.
inline double dev_loss(const SpeakerExtractor& model,
                       const std::vector<LoadedExample>& dev) {
  if (dev.empty()) throw std::invalid_argument("empty dev set");
  NoGradGuard no_grad;
  ForwardContext ctx;
  double total = 0.0;
  for (const auto& ex : dev) {
    auto out = model.forward(ex.mixture, ex.reference, ctx);
    total += multiscale_si_snr_loss(out.estimates, ex.target,
                                    model.config().objectives.weights,
                                    model.config().objectives.si_snr)
                 .item();
  }
  return total / static_cast<double>(dev.size());
}

inline TrainResult train(const std::vector<CorpusManifest>& train_manifests,
                         const CorpusManifest& dev_manifest,
                         const RunConfig& config, const TrainOptions& opts = {}) {
  config.validate();
  const TrainConfig& tc = config.training;
  const auto speakers = speaker_labels(train_manifests);
  if (speakers.empty()) throw std::invalid_argument("training manifest is empty");
  std::map<std::string, int> labels;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    labels[speakers[i]] = static_cast<int>(i);
  }
  std::vector<LoadedExample> train_set;
  for (const auto& m : train_manifests) {
    auto part = load_examples(m, config.sample_rate, labels);
    std::move(part.begin(), part.end(), std::back_inserter(train_set));
  }
  const auto dev_set = load_examples(dev_manifest, config.sample_rate, labels);
  if (dev_set.empty()) throw std::invalid_argument("dev manifest is empty");

  SpeakerExtractor model(config, static_cast<int>(speakers.size()), tc.seed);
  Adam adam(model.params(), tc.learning_rate, tc.adam_beta1, tc.adam_beta2,
            tc.adam_epsilon);
  Rng rng(derive_seed(tc.seed, 0x7EA1));
  EarlyStopping stopper(tc.early_stop_patience);
  const auto segment_len =
      static_cast<std::size_t>(std::llround(tc.segment_s * config.sample_rate));
  const auto& weights = config.objectives.weights;
  const auto& si_opts = config.objectives.si_snr;

  TrainResult result;
  result.best = make_checkpoint(model, speakers, 0,
                                std::numeric_limits<double>::infinity(),
                                rng.state());
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  bool out_of_steps = false;
  for (int epoch = 1; epoch <= tc.epochs && !out_of_steps; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int epoch_steps = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(tc.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      model.params().zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        const LoadedExample& ex = train_set[order[b]];
        auto [mixture, target] = detail::training_segment(ex, segment_len, rng);
        Waveform reference = detail::training_reference(
            ex.reference, segment_len, model.min_reference_samples(), rng);
        ForwardContext ctx{true, &rng};
        auto out = model.forward(mixture, reference, ctx);
        Var loss = multitask_loss(out.estimates, target, out.logits, ex.label,
                                  weights, si_opts);
        if (!std::isfinite(loss.item())) {
          if (!opts.dump_dir.empty()) {
            write_wav(opts.dump_dir / (ex.utterance_id + "_mix.wav"), mixture);
            write_wav(opts.dump_dir / (ex.utterance_id + "_target.wav"), target);
            write_wav(opts.dump_dir / (ex.utterance_id + "_ref.wav"), reference);
          }
          throw NonFiniteLossError("non-finite loss at epoch " +
                                   std::to_string(epoch) + ", utterance " +
                                   ex.utterance_id);
        }
        backward(loss, inv_batch);
        batch_loss += loss.item() * inv_batch;
      }
      clip_grad_norm(model.params(), tc.gradient_clip_norm);
      adam.step();
      result.step_losses.push_back(batch_loss);
      epoch_loss += batch_loss;
      ++epoch_steps;
      ++result.steps;
      if (tc.max_steps > 0 && result.steps >= tc.max_steps) {
        out_of_steps = true;
        break;
      }
    }

    const double dev = dev_loss(model, dev_set);
    result.dev_losses.push_back(dev);
    result.epochs_run = epoch;
    const bool improved = stopper.update(dev);
    if (improved) {
      result.best = make_checkpoint(model, speakers, epoch, dev, rng.state());
    } else if (stopper.stale_epochs() % tc.lr_halving_patience == 0) {
      adam.set_learning_rate(adam.learning_rate() * 0.5);
    }
    if (opts.log) {
      char line[160];
      std::snprintf(line, sizeof(line),
                    "epoch %d  steps %d  train %.4f  dev %.4f  lr %.2e%s\n", epoch,
                    result.steps, epoch_loss / std::max(1, epoch_steps), dev,
                    adam.learning_rate(), improved ? "  *" : "");
      *opts.log << line << std::flush;
    }
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

inline TrainResult train(const CorpusManifest& train_manifest,
                         const CorpusManifest& dev_manifest,
                         const RunConfig& config, const TrainOptions& opts = {}) {
  return train(std::vector<CorpusManifest>{train_manifest}, dev_manifest, config,
               opts);
}

inline Waveform extract(const Checkpoint& checkpoint, const Waveform& mixture,
                        const Waveform& reference) {
  return restore_model(checkpoint)->extract(mixture, reference);
}

struct UtteranceScore {
  std::string utterance_id;
  MixtureType type = MixtureType::k2Mix;
  double si_sdr_db = 0.0;
  double input_si_sdr_db = 0.0;
  double improvement_db() const { return si_sdr_db - input_si_sdr_db; }
};

struct TypeSummary {
  std::size_t count = 0;
  double mean_si_sdr_db = 0.0;
  double mean_input_si_sdr_db = 0.0;
  double mean_improvement_db = 0.0;
};

struct EvaluationReport {
  std::string system;
  int stacks = 0;
  std::string config_hash;
  std::vector<UtteranceScore> utterances;

  std::map<MixtureType, TypeSummary> summary() const {
    std::map<MixtureType, TypeSummary> out;
    for (const auto& u : utterances) {
      auto& s = out[u.type];
      ++s.count;
      s.mean_si_sdr_db += u.si_sdr_db;
      s.mean_input_si_sdr_db += u.input_si_sdr_db;
      s.mean_improvement_db += u.improvement_db();
    }
    for (auto& [_, s] : out) {
      const double n = static_cast<double>(s.count);
      s.mean_si_sdr_db /= n;
      s.mean_input_si_sdr_db /= n;
      s.mean_improvement_db /= n;
    }
    return out;
  }
};

using ExtractFn = std::function<Waveform(const LoadedExample&)>;

// Scores `extract_fn` and the unprocessed mixture against the target for every
// manifest entry.
inline EvaluationReport evaluate(const CorpusManifest& manifest, int sample_rate,
                                 const ExtractFn& extract_fn,
                                 const SiSnrOptions& opts = {}) {
  if (manifest.entries.empty()) {
    throw std::invalid_argument("test manifest has no entries");
  }
  EvaluationReport report;
  for (const auto& ex : load_examples(manifest, sample_rate)) {
    const Waveform estimate = extract_fn(ex);
    if (estimate.size() != ex.mixture.size()) {
      throw std::runtime_error("extracted signal length differs from the mixture");
    }
    UtteranceScore s;
    s.utterance_id = ex.utterance_id;
    s.type = ex.type;
    s.si_sdr_db = si_sdr(estimate, ex.target, opts);
    s.input_si_sdr_db = si_sdr(ex.mixture, ex.target, opts);
    report.utterances.push_back(s);
  }
  return report;
}

inline EvaluationReport evaluate(const SpeakerExtractor& model,
                                 const CorpusManifest& manifest) {
  auto report = evaluate(
      manifest, model.config().sample_rate,
      [&](const LoadedExample& ex) { return model.extract(ex.mixture, ex.reference); },
      model.config().objectives.si_snr);
  report.system = to_string(model.config().separator.architecture);
  report.stacks = model.config().separator.architecture == Architecture::kTcnBaseline
                      ? 0
                      : model.config().separator.stacks;
  report.config_hash = config_hash(model.config());
  return report;
}

inline EvaluationReport evaluate(const Checkpoint& checkpoint,
                                 const CorpusManifest& manifest) {
  return evaluate(*restore_model(checkpoint), manifest);
}

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

// Line-delimited report: one "utterance" record per entry, then "summary"
// records (input mixture row and system row per mixture type) with means
// rounded to two decimals.
inline std::vector<json> report_records(const EvaluationReport& r) {
  std::vector<json> out;
  for (const auto& u : r.utterances) {
    out.push_back({{"record", "utterance"},
                   {"utterance_id", u.utterance_id},
                   {"mixture_type", to_string(u.type)},
                   {"si_sdr_db", u.si_sdr_db},
                   {"input_si_sdr_db", u.input_si_sdr_db},
                   {"si_sdr_improvement_db", u.improvement_db()}});
  }
  for (const auto& [type, s] : r.summary()) {
    out.push_back({{"record", "summary"},
                   {"system", "input mixture"},
                   {"mixture_type", to_string(type)},
                   {"count", s.count},
                   {"mean_si_sdr_db", round2(s.mean_input_si_sdr_db)},
                   {"config_hash", r.config_hash}});
    out.push_back({{"record", "summary"},
                   {"system", r.system},
                   {"stacks", r.stacks},
                   {"mixture_type", to_string(type)},
                   {"count", s.count},
                   {"mean_si_sdr_db", round2(s.mean_si_sdr_db)},
                   {"mean_si_sdr_improvement_db", round2(s.mean_improvement_db)},
                   {"config_hash", r.config_hash}});
  }
  return out;
}

inline void write_report(const std::filesystem::path& path, const EvaluationReport& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write report: " + path.string());
  for (const auto& rec : report_records(r)) os << rec.dump() << '\n';
}

inline std::vector<json> read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open report: " + path.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

}  // namespace tse
