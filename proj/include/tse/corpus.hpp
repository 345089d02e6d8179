// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Corpus simulation: speaker indices in, mixed audio plus line-delimited
// manifests out.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/json_util.hpp"
#include "tse/mixing.hpp"
#include "tse/random.hpp"
#include "tse/waveform.hpp"

namespace tse {

namespace fs = std::filesystem;

struct SpeechIndexEntry {
  std::string speaker_id;
  std::string utterance_id;
  fs::path path;
};

using SpeechIndex = std::vector<SpeechIndexEntry>;
using NoiseIndex = std::vector<fs::path>;

namespace detail {

inline std::vector<std::string> index_lines(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open index: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

inline fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : base / p;
}

}  // namespace detail

// Clean-speech index: one "<speaker_id> <path>" record per line (tab or space
// separated). Relative paths resolve against the index file's directory.
inline SpeechIndex read_speech_index(const fs::path& path) {
  SpeechIndex index;
  const fs::path base = path.parent_path();
  for (const auto& line : detail::index_lines(path)) {
    std::istringstream ls(line);
    std::string speaker, file;
    if (!(ls >> speaker >> file)) {
      throw std::runtime_error("malformed speech index line: " + line);
    }
    fs::path p = detail::resolve(base, file);
    index.push_back({speaker, p.stem().string(), p});
  }
  return index;
}

// Noise index: one path per line.
inline NoiseIndex read_noise_index(const fs::path& path) {
  NoiseIndex index;
  const fs::path base = path.parent_path();
  for (const auto& line : detail::index_lines(path)) {
    std::istringstream ls(line);
    std::string file;
    ls >> file;
    index.push_back(detail::resolve(base, file));
  }
  return index;
}

struct SplitCounts {
  int two_mix = 0;
  int three_mix = 0;
  int noisy_mix = 0;

  int count(MixtureType t) const {
    switch (t) {
      case MixtureType::k2Mix: return two_mix;
      case MixtureType::k3Mix: return three_mix;
      case MixtureType::kNoisyMix: return noisy_mix;
    }
    return 0;
  }
  int total() const { return two_mix + three_mix + noisy_mix; }
};

struct SimulationConfig {
  int sample_rate = kDefaultSampleRate;
  std::array<double, 2> snr_range_db{0.0, 5.0};
  std::array<double, 2> noise_snr_range_db{-6.0, 3.0};
  SplitCounts train{8, 0, 0};
  SplitCounts dev{2, 0, 0};
  SplitCounts test{0, 0, 0};
  // Speakers held out for the test split; train and dev share the rest.
  int test_speakers = 0;
  // "loop": short noise is looped, long noise randomly cropped.
  // "strict": noise shorter than the mixture is an error.
  std::string noise_fit = "loop";

  void validate() const {
    if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
    if (snr_range_db[0] > snr_range_db[1]) {
      throw ConfigError("snr_range_db must be [low, high]");
    }
    if (noise_snr_range_db[0] > noise_snr_range_db[1]) {
      throw ConfigError("noise_snr_range_db must be [low, high]");
    }
    for (const auto* s : {&train, &dev, &test}) {
      if (s->two_mix < 0 || s->three_mix < 0 || s->noisy_mix < 0) {
        throw ConfigError("mixture counts must be non-negative");
      }
    }
    if (test_speakers < 0) throw ConfigError("test_speakers must be >= 0");
    if (noise_fit != "loop" && noise_fit != "strict") {
      throw ConfigError("noise_fit must be \"loop\" or \"strict\"");
    }
  }
};

inline json to_json(const SplitCounts& c) {
  return {{"2mix", c.two_mix}, {"3mix", c.three_mix}, {"noisymix", c.noisy_mix}};
}

inline SplitCounts split_counts_from_json(const json& j, const std::string& path,
                                          SplitCounts c) {
  StrictObject o(j, path);
  o.get("2mix", c.two_mix);
  o.get("3mix", c.three_mix);
  o.get("noisymix", c.noisy_mix);
  o.finish();
  return c;
}

inline json to_json(const SimulationConfig& c) {
  return {{"snr_range_db", c.snr_range_db},
          {"noise_snr_range_db", c.noise_snr_range_db},
          {"train", to_json(c.train)},
          {"dev", to_json(c.dev)},
          {"test", to_json(c.test)},
          {"test_speakers", c.test_speakers},
          {"noise_fit", c.noise_fit},
          {"three_mix_snr_reference", "interference_sum"}};
}

inline SimulationConfig simulation_config_from_json(const json& j,
                                                    const std::string& path,
                                                    int sample_rate) {
  SimulationConfig c;
  c.sample_rate = sample_rate;
  StrictObject o(j, path);
  o.get("snr_range_db", c.snr_range_db);
  o.get("noise_snr_range_db", c.noise_snr_range_db);
  c.train = split_counts_from_json(o.child("train"), o.path("train"), c.train);
  c.dev = split_counts_from_json(o.child("dev"), o.path("dev"), c.dev);
  c.test = split_counts_from_json(o.child("test"), o.path("test"), c.test);
  o.get("test_speakers", c.test_speakers);
  o.get("noise_fit", c.noise_fit);
  std::string three_mix_ref = "interference_sum";
  o.get("three_mix_snr_reference", three_mix_ref);
  if (three_mix_ref != "interference_sum") {
    throw ConfigError(path + ".three_mix_snr_reference: only "
                      "\"interference_sum\" is supported");
  }
  o.finish();
  c.validate();
  return c;
}

struct ManifestEntry {
  std::string utterance_id;
  fs::path mixture_path;
  fs::path target_path;
  fs::path reference_path;
  std::string speaker_id;
  double snr_db = 0.0;
  MixtureType mixture_type = MixtureType::k2Mix;
  std::optional<double> noise_snr_db;
  std::vector<std::string> interferer_ids;
};

struct CorpusManifest {
  std::string split;
  std::uint64_t seed = 0;
  std::string config_hash;
  json config = json::object();
  std::vector<ManifestEntry> entries;
  // Directory that relative entry paths resolve against.
  fs::path base_dir;

  fs::path resolve(const fs::path& p) const { return detail::resolve(base_dir, p); }

  std::set<std::string> speakers() const {
    std::set<std::string> out;
    for (const auto& e : entries) out.insert(e.speaker_id);
    return out;
  }
};

inline json to_json(const ManifestEntry& e) {
  json j = {{"record", "entry"},
            {"utterance_id", e.utterance_id},
            {"mixture_path", e.mixture_path.generic_string()},
            {"target_path", e.target_path.generic_string()},
            {"reference_path", e.reference_path.generic_string()},
            {"speaker_id", e.speaker_id},
            {"snr_db", e.snr_db},
            {"mixture_type", to_string(e.mixture_type)},
            {"interferer_ids", e.interferer_ids}};
  if (e.noise_snr_db) j["noise_snr_db"] = *e.noise_snr_db;
  return j;
}

inline ManifestEntry manifest_entry_from_json(const json& j) {
  ManifestEntry e;
  e.utterance_id = j.at("utterance_id").get<std::string>();
  e.mixture_path = j.at("mixture_path").get<std::string>();
  e.target_path = j.at("target_path").get<std::string>();
  e.reference_path = j.at("reference_path").get<std::string>();
  e.speaker_id = j.at("speaker_id").get<std::string>();
  e.snr_db = j.at("snr_db").get<double>();
  e.mixture_type = parse_mixture_type(j.at("mixture_type").get<std::string>());
  if (j.contains("noise_snr_db")) e.noise_snr_db = j["noise_snr_db"].get<double>();
  if (j.contains("interferer_ids")) {
    e.interferer_ids = j["interferer_ids"].get<std::vector<std::string>>();
  }
  return e;
}

// Header line, then one line per entry.
inline void write_manifest(const fs::path& path, const CorpusManifest& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest: " + path.string());
  json header = {{"record", "header"},
                 {"split", m.split},
                 {"seed", m.seed},
                 {"config_hash", m.config_hash},
                 {"config", m.config},
                 {"entries", m.entries.size()}};
  os << header.dump() << '\n';
  for (const auto& e : m.entries) os << to_json(e).dump() << '\n';
}

inline CorpusManifest read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest: " + path.string());
  CorpusManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
    const std::string kind = j.value("record", "entry");
    if (kind == "header") {
      m.split = j.value("split", "");
      m.seed = j.value("seed", std::uint64_t{0});
      m.config_hash = j.value("config_hash", "");
      m.config = j.value("config", json::object());
      have_header = true;
    } else {
      try {
        m.entries.push_back(manifest_entry_from_json(j));
      } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": " + e.what());
      }
    }
  }
  if (!have_header) {
    throw std::runtime_error("manifest has no header record: " + path.string());
  }
  return m;
}

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct SpeakerPool {
  std::vector<std::string> speakers;
  std::map<std::string, std::vector<const SpeechIndexEntry*>> utterances;

  std::vector<std::string> targets() const {
    std::vector<std::string> out;
    for (const auto& s : speakers) {
      if (utterances.at(s).size() >= 2) out.push_back(s);
    }
    return out;
  }
};

class AudioCache {
 public:
  explicit AudioCache(int rate) : rate_(rate) {}
  const Waveform& get(const fs::path& p) {
    auto it = cache_.find(p.string());
    if (it != cache_.end()) return it->second;
    return cache_.emplace(p.string(), read_wav(p, rate_)).first->second;
  }

 private:
  int rate_;
  std::map<std::string, Waveform> cache_;
};

}  // namespace detail

// Generates train/dev/test mixtures under `out_dir` and returns their
// manifests (also written as <out_dir>/<split>.jsonl). Randomness for entry i
// of a split and mixture type comes from derive_seed(seed, split, type, i),
// so results depend only on the inputs and the seed.
// The header hash is computed from `snapshot` when given, else from `config`.
inline std::map<std::string, CorpusManifest> simulate_corpus(
    const SpeechIndex& index, const NoiseIndex& noise_index,
    const SimulationConfig& config, std::uint64_t seed, const fs::path& out_dir,
    const std::optional<json>& snapshot = std::nullopt) {
  config.validate();

  std::map<std::string, std::vector<const SpeechIndexEntry*>> by_speaker;
  for (const auto& e : index) by_speaker[e.speaker_id].push_back(&e);
  for (auto& [_, utts] : by_speaker) {
    std::sort(utts.begin(), utts.end(), [](const auto* a, const auto* b) {
      return a->path.generic_string() < b->path.generic_string();
    });
  }
  std::vector<std::string> speakers;
  for (const auto& [s, _] : by_speaker) speakers.push_back(s);

  if (config.test_speakers > 0 &&
      static_cast<std::size_t>(config.test_speakers) >= speakers.size()) {
    throw SimulationError("test_speakers = " +
                          std::to_string(config.test_speakers) +
                          " leaves no training speakers");
  }
  Rng split_rng(derive_seed(seed, 0x5EED));
  std::vector<std::string> shuffled = speakers;
  split_rng.shuffle(shuffled);
  detail::SpeakerPool train_pool, test_pool;
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    auto& pool = i < static_cast<std::size_t>(config.test_speakers) ? test_pool
                                                                    : train_pool;
    pool.speakers.push_back(shuffled[i]);
    pool.utterances[shuffled[i]] = by_speaker[shuffled[i]];
  }
  std::sort(train_pool.speakers.begin(), train_pool.speakers.end());
  std::sort(test_pool.speakers.begin(), test_pool.speakers.end());

  // The manifest records the caller's full config when given one.
  json cfg_json = snapshot ? *snapshot : to_json(config);
  if (!snapshot) cfg_json["sample_rate"] = config.sample_rate;
  const std::string cfg_hash = fnv1a_hex(cfg_json.dump());

  const std::array<std::pair<std::string, const SplitCounts*>, 3> splits{{
      {"train", &config.train}, {"dev", &config.dev}, {"test", &config.test}}};
  const std::array<MixtureType, 3> types{MixtureType::k2Mix, MixtureType::k3Mix,
                                         MixtureType::kNoisyMix};

  detail::AudioCache audio(config.sample_rate);
  std::map<std::string, CorpusManifest> result;

  for (std::size_t si = 0; si < splits.size(); ++si) {
    const auto& [split, counts] = splits[si];
    const auto& pool = split == "test" ? test_pool : train_pool;
    CorpusManifest manifest;
    manifest.split = split;
    manifest.seed = seed;
    manifest.config_hash = cfg_hash;
    manifest.config = cfg_json;
    manifest.base_dir = out_dir;

    for (std::size_t ti = 0; ti < types.size(); ++ti) {
      const MixtureType type = types[ti];
      const int n = counts->count(type);
      if (n == 0) continue;
      const std::size_t needed = type == MixtureType::k3Mix ? 3 : 2;
      const auto targets = pool.targets();
      if (pool.speakers.size() < needed || targets.empty()) {
        throw SimulationError(
            split + " " + to_string(type) + ": need at least " +
            std::to_string(needed) + " speakers (one with >= 2 utterances), " +
            "have " + std::to_string(pool.speakers.size()));
      }
      if (type == MixtureType::kNoisyMix && noise_index.empty()) {
        throw SimulationError("noisy mixtures requested without a noise index");
      }

      for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, si + 1, ti + 1, static_cast<std::uint64_t>(i)));
        const std::string& spk = targets[rng.index(targets.size())];
        const auto& utts = pool.utterances.at(spk);
        const std::size_t ti_utt = rng.index(utts.size());
        std::size_t ri_utt = rng.index(utts.size() - 1);
        if (ri_utt >= ti_utt) ++ri_utt;

        std::vector<std::string> others;
        for (const auto& s : pool.speakers) {
          if (s != spk) others.push_back(s);
        }
        rng.shuffle(others);
        const std::size_t n_interf = needed - 1;
        std::vector<Utterance> interferers;
        for (std::size_t k = 0; k < n_interf; ++k) {
          const auto& iu = pool.utterances.at(others[k]);
          const auto* entry = iu[rng.index(iu.size())];
          interferers.push_back(
              {entry->speaker_id, entry->utterance_id, audio.get(entry->path)});
        }
        const Utterance target{spk, utts[ti_utt]->utterance_id,
                               audio.get(utts[ti_utt]->path)};
        const Waveform& reference = audio.get(utts[ri_utt]->path);
        const double snr =
            rng.uniform(config.snr_range_db[0], config.snr_range_db[1]);

        MixtureExample ex;
        if (type == MixtureType::k2Mix) {
          ex = make_2mix(target, interferers[0], snr);
        } else if (type == MixtureType::k3Mix) {
          ex = make_3mix(target, interferers[0], interferers[1], snr);
        } else {
          const Waveform& noise =
              audio.get(noise_index[rng.index(noise_index.size())]);
          const std::size_t len =
              std::max(target.audio.size(), interferers[0].audio.size());
          if (noise.size() < len && config.noise_fit == "strict") {
            throw SimulationError("noise shorter than mixture (noise_fit = strict)");
          }
          const std::size_t offset =
              noise.size() > len ? rng.index(noise.size() - len + 1) : 0;
          const double noise_snr = rng.uniform(config.noise_snr_range_db[0],
                                               config.noise_snr_range_db[1]);
          ex = make_noisymix(target, interferers[0],
                             fit_noise(noise, len, offset), snr, noise_snr);
        }

        char uid[64];
        std::snprintf(uid, sizeof(uid), "%s_%s_%05d", split.c_str(),
                      to_string(type).c_str(), i);
        const fs::path rel_dir = fs::path(split) / to_string(type);
        ManifestEntry entry;
        entry.utterance_id = uid;
        entry.mixture_path = rel_dir / (std::string(uid) + "_mix.wav");
        entry.target_path = rel_dir / (std::string(uid) + "_target.wav");
        entry.reference_path = rel_dir / (std::string(uid) + "_ref.wav");
        entry.speaker_id = spk;
        entry.snr_db = snr;
        entry.mixture_type = type;
        entry.noise_snr_db = ex.noise_snr_db;
        for (const auto& iu : interferers) entry.interferer_ids.push_back(iu.speaker_id);

        write_wav(out_dir / entry.mixture_path, ex.mixture);
        write_wav(out_dir / entry.target_path, ex.target);
        write_wav(out_dir / entry.reference_path, reference);
        manifest.entries.push_back(std::move(entry));
      }
    }
    result.emplace(split, std::move(manifest));
  }

  // Test speakers never appear in train or dev, neither as targets nor as
  // interferers.
  std::set<std::string> seen_train;
  for (const auto& split : {"train", "dev"}) {
    for (const auto& e : result.at(split).entries) {
      seen_train.insert(e.speaker_id);
      seen_train.insert(e.interferer_ids.begin(), e.interferer_ids.end());
    }
  }
  for (const auto& e : result.at("test").entries) {
    if (seen_train.count(e.speaker_id)) {
      throw SimulationError("speaker " + e.speaker_id +
                            " appears in both training and test splits");
    }
    for (const auto& s : e.interferer_ids) {
      if (seen_train.count(s)) {
        throw SimulationError("speaker " + s +
                              " appears in both training and test splits");
      }
    }
  }

  fs::create_directories(out_dir);
  for (const auto& [split, m] : result) {
    write_manifest(out_dir / (split + ".jsonl"), m);
  }
  return result;
}

}  // namespace tse
