// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/toy_corpus.hpp"
#include "tse/checkpoint.hpp"
#include "tse/mixing.hpp"
#include "tse/objectives.hpp"
#include "tse/training.hpp"

#ifndef TSE_CLI_PATH
#error "TSE_CLI_PATH must point at the tse executable"
#endif
#ifndef TSE_SOURCE_DIR
#error "TSE_SOURCE_DIR must point at the source tree"
#endif

namespace tse {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Builds the detail string and flips `pass` off on the first failed check.
class Verdict {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      if (!failures_.empty()) failures_ += "; ";
      failures_ += what;
    }
  }
  void note(const std::string& s) {
    if (!notes_.empty()) notes_ += ", ";
    notes_ += s;
  }
  Outcome done() const {
    return {pass_, pass_ ? notes_ : failures_ + (notes_.empty() ? "" : " [" + notes_ + "]")};
  }

 private:
  bool pass_ = true;
  std::string failures_;
  std::string notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Waveform random_wave(Rng& rng, std::size_t n, int rate = 8000) {
  return testing::noise_waveform(n, rng, rate, rng.uniform(0.05, 2.0));
}

// Long-double textbook SI-SNR with explicit loops.
long double brute_si_snr(const Waveform& est, const Waveform& ref) {
  const std::size_t n = est.size();
  long double me = 0, mr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    me += est.samples[i];
    mr += ref.samples[i];
  }
  me /= n;
  mr /= n;
  long double dot = 0, rr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += (est.samples[i] - me) * (ref.samples[i] - mr);
    rr += (ref.samples[i] - mr) * (ref.samples[i] - mr);
  }
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double t = dot / rr * (ref.samples[i] - mr);
    const long double e = (est.samples[i] - me) - t;
    num += t * t;
    den += e * e;
  }
  return 10.0L * std::log10(num / den);
}

Outcome si_snr_matches_oracle() {
  Verdict v;
  Rng rng(101);
  std::vector<std::pair<Waveform, Waveform>> pairs;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 16 + rng.index(4000);
    Waveform ref = random_wave(rng, n);
    Waveform est = random_wave(rng, n);
    // Mixes of reference and noise cover roughly -30..+40 dB.
    const double w = std::pow(10.0, rng.uniform(-2.0, 1.5));
    for (std::size_t i = 0; i < n; ++i) est.samples[i] = w * ref.samples[i] + est.samples[i];
    pairs.emplace_back(std::move(est), std::move(ref));
  }
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (const auto& [est, ref] : pairs) {
    const double got = si_snr(est, ref);
    const long double want = brute_si_snr(est, ref);
    if (std::abs(want) < 60.0L) {
      worst = std::max(worst, static_cast<double>(std::abs(got - want)));
    } else {
      worst = std::max(worst, std::abs(std::abs(got) - 60.0));
    }
  }
  const double elapsed = seconds_since(t0);
  v.require(worst <= 1e-9, "max |diff| " + fmt("%.3e", worst));
  v.require(elapsed <= 5.0, "took " + fmt("%.2f s", elapsed));
  v.note("1000 pairs, max |diff| " + fmt("%.2e dB", worst) + ", " + fmt("%.2f s", elapsed));
  return v.done();
}

Outcome si_snr_scale_invariant() {
  Verdict v;
  Rng rng(202);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 64 + rng.index(2000);
    Waveform ref = random_wave(rng, n);
    Waveform est = random_wave(rng, n);
    for (std::size_t i = 0; i < n; ++i) est.samples[i] += ref.samples[i];
    const double base = si_snr(est, ref);
    for (double alpha : {-2.0, 0.1, 3.7}) {
      worst = std::max(worst, std::abs(si_snr(scaled(est, alpha), ref) - base));
    }
  }
  v.require(worst < 1e-6, "max |diff| " + fmt("%.3e", worst));
  v.note("100 pairs x 3 gains, max |diff| " + fmt("%.2e dB", worst));
  return v.done();
}

double energy(const Waveform& w) {
  double e = 0.0;
  for (double s : w.samples) e += s * s;
  return e;
}

Utterance utterance(const std::string& spk, Waveform w) {
  return {spk, spk + "_u", std::move(w)};
}

Outcome mixing_hits_requested_snr() {
  Verdict v;
  Rng rng(303);
  double worst_snr = 0.0, worst_sum = 0.0;
  for (int k = 0; k < 100; ++k) {
    Waveform target = random_wave(rng, 200 + rng.index(3000));
    Waveform interference = random_wave(rng, 200 + rng.index(3000));
    const double snr = rng.uniform(-20.0, 20.0);
    const MixResult m = mix_at_snr(target, interference, snr);
    const double got = 10.0 * std::log10(power(target) / power(m.scaled_interference));
    worst_snr = std::max(worst_snr, std::abs(got - snr));
    for (std::size_t i = 0; i < m.mixture.size(); ++i) {
      const double t = i < target.size() ? target.samples[i] : 0.0;
      const double s = i < m.scaled_interference.size() ? m.scaled_interference.samples[i] : 0.0;
      worst_sum = std::max(worst_sum, std::abs(m.mixture.samples[i] - t - s));
    }
  }
  v.require(worst_snr <= 1e-6, "2-speaker SNR off by " + fmt("%.3e", worst_snr));
  v.require(worst_sum <= 1e-12, "mixture is not target + interference");

  double worst_balance = 0.0, worst_snr3 = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t lt = 200 + rng.index(3000);
    const std::size_t la = 200 + rng.index(3000);
    const std::size_t lb = 200 + rng.index(3000);
    const double snr = rng.uniform(-20.0, 20.0);
    const MixtureExample ex =
        make_3mix(utterance("t", random_wave(rng, lt)), utterance("a", random_wave(rng, la)),
                  utterance("b", random_wave(rng, lb)), snr);
    // Interferers are tail-padded; power is measured over their own length.
    const double pa = energy(ex.interferers[0]) / static_cast<double>(la);
    const double pb = energy(ex.interferers[1]) / static_cast<double>(lb);
    worst_balance = std::max(worst_balance, std::abs(pa - pb) / std::max(pa, pb));
    Waveform sum = ex.interferers[0];
    for (std::size_t i = 0; i < sum.size(); ++i) sum.samples[i] += ex.interferers[1].samples[i];
    const double p_int = energy(sum) / static_cast<double>(std::max(la, lb));
    const double p_tgt = energy(ex.target) / static_cast<double>(lt);
    worst_snr3 = std::max(worst_snr3, std::abs(10.0 * std::log10(p_tgt / p_int) - snr));
  }
  v.require(worst_balance <= 1e-10, "3-mix interferer power mismatch " + fmt("%.3e", worst_balance));
  v.require(worst_snr3 <= 1e-6, "3-mix SNR off by " + fmt("%.3e", worst_snr3));
  v.note("SNR err " + fmt("%.1e", std::max(worst_snr, worst_snr3)) + " dB, interferer power err " +
         fmt("%.1e", worst_balance));
  return v.done();
}

testing::GradCheckResult block_check(ParameterSet& p, const std::function<Var(const Var&)>& f,
                                     Rng& rng) {
  Var x(testing::random_matrix(6, 8, rng), true);
  auto readout = testing::random_readout(6, f(x).cols(), 21);
  auto wrt = testing::all_parameters(p);
  wrt.emplace_back("x", x);
  return testing::check_gradients([&] { return readout(f(x)); }, wrt);
}

testing::GradCheckResult model_check(Architecture arch) {
  RunConfig cfg = testing::toy_run_config(arch, 1);
  SpeakerExtractor model(cfg, 3, 5);
  Rng rng(18);
  Waveform mixture = testing::noise_waveform(14, rng, 1600, 0.5);
  Waveform target = testing::noise_waveform(14, rng, 1600, 0.5);
  Waveform reference = testing::noise_waveform(40, rng, 1600, 0.5);
  ForwardContext ctx{true, &rng};
  testing::GradCheckOptions opts;
  opts.max_per_tensor = 12;
  return testing::check_gradients(
      [&] {
        auto out = model.forward(mixture, reference, ctx);
        return multitask_loss(out.estimates, target, out.logits, 1, LossWeights{});
      },
      testing::all_parameters(model.params()), opts);
}

Outcome gradients_match_finite_differences() {
  Verdict v;
  const auto t0 = Clock::now();
  const SeparatorConfig small = testing::toy_run_config().separator;
  std::vector<std::pair<std::string, testing::GradCheckResult>> results;
  {
    ParameterSet p;
    Rng rng(19);
    TcnBlock block(p, "tcn", 8, 6, 3, 2, rng);
    results.emplace_back("tcn block", block_check(p, [&](const Var& x) { return block(x); }, rng));
  }
  {
    ParameterSet p;
    Rng rng(20);
    ConformerBlock block(p, "c", small, rng);
    ForwardContext ctx{true, &rng};
    results.emplace_back("conformer block",
                         block_check(p, [&](const Var& x) { return block(x, ctx); }, rng));
  }
  {
    ParameterSet p;
    Rng rng(21);
    ExternalFeedForward ffn(p, "f", 8, 8, 0.0, rng);
    results.emplace_back(
        "external ffn",
        block_check(p, [&](const Var& x) { return ffn(x, ForwardContext{}); }, rng));
  }
  results.emplace_back("conformer-ffn model", model_check(Architecture::kConformerFfn));
  results.emplace_back("tcn-conformer model", model_check(Architecture::kTcnConformer));
  {
    Rng rng(12);
    Waveform ref = testing::noise_waveform(64, rng, 8000, 1.0);
    std::array<Var, 3> est;
    for (auto& e : est) {
      Waveform w = testing::noise_waveform(64, rng, 8000, 1.0);
      for (std::size_t i = 0; i < 64; ++i) w.samples[i] += ref.samples[i];
      e = Var(waveform_var(w).value(), true);
    }
    results.emplace_back("multiscale loss",
                         testing::check_gradients(
                             [&] { return multiscale_si_snr_loss(est, ref, LossWeights{}); },
                             {{"s1", est[0]}, {"s2", est[1]}, {"s3", est[2]}}));
  }
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  for (const auto& [name, r] : results) {
    v.require(r.max_rel_error < 1e-4, name + ": " + r.worst);
    v.require(r.checked > 0, name + ": nothing checked");
    worst = std::max(worst, r.max_rel_error);
  }
  v.require(elapsed <= 120.0, "took " + fmt("%.1f s", elapsed));
  v.note(std::to_string(results.size()) + " checks, max rel err " + fmt("%.2e", worst) + ", " +
         fmt("%.1f s", elapsed));
  return v.done();
}

Outcome default_config_matches() {
  Verdict v;
  const RunConfig defaults;
  defaults.validate();
  ParameterSet p;
  Rng rng(7);
  ConformerBlock block(p, "c", defaults.separator, rng);
  v.require(block.ffn1().expand().out_dim() == 2048 && block.ffn2().expand().out_dim() == 2048,
            "conformer feed-forward width");
  v.require(block.conv().expand().out_dim() == 1536, "conv module expansion");
  v.require(block.conv().depthwise().kernel_size() == 31, "depthwise kernel");
  v.require(block.attention().heads() == 8, "attention heads");

  SeparatorConfig ffn_cfg = defaults.separator;
  ffn_cfg.architecture = Architecture::kConformerFfn;
  ffn_cfg.stacks = 1;
  ConformerFfnStack stack(p, ffn_cfg, rng);
  v.require(stack.ffns().at(0).in_dim() == 512 && stack.ffns().at(0).out_dim() == 256,
            "external feed-forward 512 -> 256");

  v.require(defaults.frontend.filter_length(Scale::kShort) == 40 &&
                defaults.frontend.filter_length(Scale::kMid) == 160 &&
                defaults.frontend.filter_length(Scale::kLong) == 320,
            "filter lengths");
  v.require(defaults.frontend.channels_per_scale == 256 &&
                defaults.frontend.bottleneck_dim == 256,
            "encoder widths");

  ParameterSet q;
  SpeakerEmbedder embedder(q, defaults.embedder, defaults.frontend.bottleneck_dim, rng);
  const auto& blocks = embedder.blocks();
  v.require(blocks.size() == 3 && blocks[0].in_dim() == 256 && blocks[0].out_dim() == 256 &&
                blocks[1].out_dim() == 512 && blocks[2].out_dim() == 512,
            "embedder blocks");
  Var e = embedder(Var(testing::random_matrix(30, 256, rng, 0.1)), ForwardContext{});
  v.require(e.cols() == 256 && e.rows() == 1, "embedding width");
  v.require(defaults.separator.stacks == 4 &&
                defaults.separator.architecture == Architecture::kTcnConformer,
            "default separator");
  v.note("ffn 2048, conv 1536, kernel 31, heads 8, ext ffn 512->256, embedding 256");
  return v.done();
}

RunConfig overfit_config() {
  RunConfig c;
  c.sample_rate = 8000;
  c.simulation.sample_rate = 8000;
  c.frontend.sample_rate = 8000;
  c.frontend.channels_per_scale = 16;
  c.frontend.bottleneck_dim = 8;
  c.embedder.block_dims = {{8, 8}, {8, 16}, {16, 16}};
  c.embedder.embedding_dim = 8;
  c.separator.model_dim = 16;
  c.separator.heads = 2;
  c.separator.conv_kernel = 7;
  c.separator.dropout = 0.0;
  c.separator.tcn_hidden = 16;
  c.separator.stacks = 1;
  c.training.epochs = 1000;
  c.training.early_stop_patience = 999;
  c.training.lr_halving_patience = 25;
  c.training.segment_s = 0.5;
  c.training.batch_size = 4;
  c.training.max_steps = 500;
  c.training.learning_rate = 3e-3;
  c.simulation.train = {4, 0, 0};
  c.simulation.dev = {0, 0, 0};
  c.validate();
  return c;
}

Outcome overfits_a_tiny_corpus() {
  Verdict v;
  const RunConfig cfg = overfit_config();
  testing::TempDir dir;
  auto corpus = testing::simulate_toy_corpus(dir.path(), cfg, 2, 3, 1);
  const CorpusManifest& train_set = corpus.at("train");
  const auto t0 = Clock::now();
  // Scoring on the training mixtures is the point here.
  const TrainResult r = train(train_set, train_set, cfg);
  const double elapsed = seconds_since(t0);
  v.require(r.step_losses.back() < r.step_losses.front(),
            "last step loss " + fmt("%.2f", r.step_losses.back()) + " not below first " +
                fmt("%.2f", r.step_losses.front()));

  const auto model = restore_model(r.best);
  const auto summary = evaluate(*model, train_set).summary().at(MixtureType::k2Mix);
  v.require(summary.mean_improvement_db >= 5.0,
            "SI-SDRi " + fmt("%.2f dB", summary.mean_improvement_db));

  std::map<std::string, int> labels;
  for (std::size_t i = 0; i < r.best.speakers.size(); ++i) labels[r.best.speakers[i]] = static_cast<int>(i);
  int correct = 0, total = 0;
  {
    NoGradGuard no_grad;
    for (const auto& ex : load_examples(train_set, cfg.sample_rate, labels)) {
      const Matrix logits = model->classify(model->embed(ex.reference, ForwardContext{})).value();
      Eigen::Index arg = 0;
      logits.row(0).maxCoeff(&arg);
      correct += static_cast<int>(arg) == ex.label;
      ++total;
    }
  }
  v.require(total > 0 && correct == total,
            "speaker accuracy " + std::to_string(correct) + "/" + std::to_string(total));
  v.note("loss " + fmt("%.2f", r.step_losses.front()) + " -> " + fmt("%.2f", r.step_losses.back()) +
         ", SI-SDRi " + fmt("%.2f dB", summary.mean_improvement_db) + ", speaker acc " +
         std::to_string(correct) + "/" + std::to_string(total) + ", " + fmt("%.0f s", elapsed));
  return v.done();
}

Outcome training_is_reproducible() {
  Verdict v;
  RunConfig cfg = testing::toy_run_config();
  cfg.simulation.train = {4, 0, 0};
  cfg.simulation.dev = {2, 0, 0};
  testing::TempDir dir;
  auto corpus = testing::simulate_toy_corpus(dir.path(), cfg, 2, 3, 1);
  const TrainResult a = train(corpus.at("train"), corpus.at("dev"), cfg);
  const TrainResult b = train(corpus.at("train"), corpus.at("dev"), cfg);
  v.require(a.dev_losses == b.dev_losses, "dev losses differ between runs");
  save_checkpoint(dir / "a.ckpt", a.best);
  save_checkpoint(dir / "b.ckpt", b.best);
  const std::string bytes = testing::slurp(dir / "a.ckpt");
  v.require(bytes == testing::slurp(dir / "b.ckpt"), "checkpoints differ between runs");
  const Checkpoint loaded = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(dir / "c.ckpt", loaded);
  v.require(testing::slurp(dir / "c.ckpt") == bytes, "checkpoint round trip is not bitwise");
  v.require(loaded.tensors == a.best.tensors, "tensors changed on reload");
  v.note(std::to_string(a.dev_losses.size()) + " epochs, " + std::to_string(bytes.size()) +
         " checkpoint bytes");
  return v.done();
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd =
      std::string("\"") + TSE_CLI_PATH + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

Outcome cli_walkthrough() {
  Verdict v;
  testing::TempDir dir;
  const auto log = dir / "log.txt";
  const std::filesystem::path config = std::filesystem::path(TSE_SOURCE_DIR) / "configs/toy.json";
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"toy-corpus", "toy-corpus --out-dir " + q(dir / "speech") +
                         " --speakers 3 --utterances 4 --sample-rate 8000 --seed 1"},
      {"simulate", "simulate --config " + q(config) + " --clean-index " +
                       q(dir / "speech/speech.txt") + " --out-dir " + q(dir / "corpus") +
                       " --seed 1"},
      {"train", "train --config " + q(config) + " --train-manifest " +
                    q(dir / "corpus/train.jsonl") + " --dev-manifest " +
                    q(dir / "corpus/dev.jsonl") + " --out " + q(dir / "model.ckpt")},
      {"evaluate", "evaluate --checkpoint " + q(dir / "model.ckpt") + " --test-manifest " +
                       q(dir / "corpus/dev.jsonl") + " --report " + q(dir / "report.jsonl")},
  };
  for (const auto& [name, args] : steps) {
    const int code = run_cli(args, log);
    if (code != 0) {
      v.require(false, name + " exited " + std::to_string(code) + ": " + testing::slurp(log));
      return v.done();
    }
  }
  std::map<std::string, double> input, trained;
  for (const auto& rec : read_report(dir / "report.jsonl")) {
    if (rec.at("record") != "summary") continue;
    const std::string type = rec.at("mixture_type");
    const double value = rec.at("mean_si_sdr_db");
    (rec.at("system") == "input mixture" ? input : trained)[type] = value;
  }
  v.require(!input.empty() && input.size() == trained.size(), "report rows missing");
  for (const auto& [type, in] : input) {
    v.require(std::isfinite(in), type + " input row not finite");
    v.require(trained.count(type) && trained.at(type) > in,
              type + " trained " + fmt("%.2f", trained.count(type) ? trained.at(type) : NAN) +
                  " dB vs input " + fmt("%.2f", in));
    v.note(type + " input " + fmt("%.2f dB", in) + ", trained " + fmt("%.2f dB", trained[type]));
  }
  return v.done();
}

}  // namespace
}  // namespace tse

int main() {
  using namespace tse;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"SI-SNR matches a long-double oracle", si_snr_matches_oracle},
      {"SI-SNR is scale invariant", si_snr_scale_invariant},
      {"mixtures hit the requested SNR", mixing_hits_requested_snr},
      {"analytic gradients match finite differences", gradients_match_finite_differences},
      {"default configuration has the expected widths", default_config_matches},
      {"tiny corpus is overfit", overfits_a_tiny_corpus},
      {"training and checkpoints are reproducible", training_is_reproducible},
      {"CLI toy walkthrough beats the input mixture", cli_walkthrough},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << " ("
              << o.detail << ")" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
