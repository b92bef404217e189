// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sslasr/audio.hpp"
#include "sslasr/common.hpp"

namespace sslasr {

using nlohmann::json;

std::string split_name(Split s) {
  switch (s) {
    case Split::pretrain: return "pretrain";
    case Split::finetune: return "finetune";
    case Split::test: return "test";
  }
  return "?";
}

void Manifest::validate() const {
  std::set<std::string> ids;
  for (const auto& u : utterances) {
    if (u.duration <= 0)
      throw DataError("manifest: non-positive duration for id " + u.id);
    if (!ids.insert(u.id).second)
      throw DataError("manifest: duplicate id " + u.id);
    bool labeled = split != Split::pretrain;
    if (labeled && !u.text.has_value())
      throw DataError("manifest: missing transcript for id " + u.id +
                      " in labeled split");
    if (!labeled && u.text.has_value())
      throw DataError("manifest: unexpected transcript for id " + u.id +
                      " in pretrain split");
  }
}

double Manifest::total_duration() const {
  double t = 0;
  for (const auto& u : utterances) t += u.duration;
  return t;
}

Manifest load_manifest(const std::string& path, Split split) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest: cannot open " + path);
  Manifest m;
  m.split = split;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("manifest: line " + std::to_string(lineno) +
                        " is not valid JSON: " + e.what());
    }
    for (const char* field : {"id", "audio_path", "duration"}) {
      if (!j.contains(field))
        throw FormatError("manifest: line " + std::to_string(lineno) +
                          " missing \"" + field + "\"");
    }
    Utterance u;
    u.id = j["id"].get<std::string>();
    u.audio_path = j["audio_path"].get<std::string>();
    u.duration = j["duration"].get<double>();
    if (j.contains("text")) u.text = j["text"].get<std::string>();
    m.utterances.push_back(std::move(u));
  }
  m.validate();
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  m.validate();
  std::ostringstream out;
  for (const auto& u : m.utterances) {
    json j;
    j["id"] = u.id;
    j["audio_path"] = u.audio_path;
    j["duration"] = u.duration;
    if (u.text) j["text"] = *u.text;
    out << j.dump() << "\n";
  }
  write_text_file(path, out.str());
}

Alignments load_alignments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("alignments: cannot open " + path);
  Alignments a;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("alignments: line " + std::to_string(lineno) +
                        " is not valid JSON: " + e.what());
    }
    if (!j.contains("id") || !j.contains("units"))
      throw FormatError("alignments: line " + std::to_string(lineno) +
                        " missing \"id\" or \"units\"");
    a[j["id"].get<std::string>()] = j["units"].get<std::vector<int>>();
  }
  return a;
}

void save_alignments(const Alignments& a, const std::string& path) {
  std::ostringstream out;
  for (const auto& [id, units] : a) {
    json j;
    j["id"] = id;
    j["units"] = units;
    out << j.dump() << "\n";
  }
  write_text_file(path, out.str());
}

void SynthSpec::validate() const {
  if (n_symbols < 2) throw ConfigError("synth: n_symbols must be >= 2");
  if (n_symbols > 26) throw ConfigError("synth: n_symbols must be <= 26");
  if (min_symbols < 1 || max_symbols < min_symbols)
    throw ConfigError("synth: invalid utterance length range");
  if (unit_duration_ms <= 0 ||
      std::fabs(std::remainder(unit_duration_ms, 10.0)) > 1e-9)
    throw ConfigError("synth: unit_duration_ms must be a positive multiple of 10");
  if (noise_level < 0) throw ConfigError("synth: negative noise_level");
  if (n_confusable_pairs < 0 || 2 * n_confusable_pairs > n_symbols)
    throw ConfigError("synth: n_confusable_pairs out of range");
  if (sample_rate <= 0) throw ConfigError("synth: bad sample_rate");
  double min_utt_s = min_symbols * unit_duration_ms / 1000.0;
  for (double h : {hours_pretrain, hours_finetune, hours_test}) {
    if (h < 0) throw ConfigError("synth: negative target hours");
    if (h > 0 && h * 3600.0 < min_utt_s)
      throw ConfigError(
          "synth: target hours infeasible for the utterance length range");
  }
}

namespace {

// Tone bands at DFT bin centers for the 25 ms / 16 kHz analysis frame
// (multiples of 40 Hz), spread roughly mel-uniformly.
std::vector<double> tone_bands(int count, int sample_rate) {
  static const int kBins[] = {10, 16, 23, 31, 41, 53, 67, 83, 101,
                              121, 143, 167, 193, 221, 251, 283};
  const int available = static_cast<int>(std::size(kBins));
  if (count > available)
    throw ConfigError("synth: too many tone bands requested");
  std::vector<double> f(count);
  for (int i = 0; i < count; ++i)
    f[i] = kBins[i] * static_cast<double>(sample_rate) / 400.0;
  return f;
}

struct SymbolPattern {
  // Two tones; simultaneous unless ordered, in which case the first tone
  // occupies the first half of the unit and the second the second half.
  double f1 = 0, f2 = 0;
  bool ordered = false;
};

std::vector<SymbolPattern> build_symbols(const SynthSpec& spec) {
  int n_plain = spec.n_symbols - 2 * spec.n_confusable_pairs;
  std::vector<double> bands =
      tone_bands(2 * n_plain + 2 * spec.n_confusable_pairs, spec.sample_rate);
  std::vector<SymbolPattern> pats(spec.n_symbols);
  for (int i = 0; i < n_plain; ++i)
    pats[i] = {bands[2 * i], bands[2 * i + 1], false};
  for (int p = 0; p < spec.n_confusable_pairs; ++p) {
    double lo = bands[2 * n_plain + 2 * p];
    double hi = bands[2 * n_plain + 2 * p + 1];
    pats[n_plain + 2 * p] = {lo, hi, true};
    pats[n_plain + 2 * p + 1] = {hi, lo, true};
  }
  return pats;
}

// One unit waveform with a short raised-cosine attack/decay ramp.
void render_unit(const SymbolPattern& pat, int n_samples, int sample_rate,
                 double amp, double phase1, double phase2,
                 std::vector<float>* out) {
  const double two_pi = 2.0 * M_PI;
  const int ramp = std::min(n_samples / 8, sample_rate / 200);  // <= 5 ms
  const int half = n_samples / 2;
  for (int n = 0; n < n_samples; ++n) {
    double t = static_cast<double>(n) / sample_rate;
    double v;
    if (!pat.ordered) {
      v = amp * (std::sin(two_pi * pat.f1 * t + phase1) +
                 std::sin(two_pi * pat.f2 * t + phase2));
    } else {
      v = (n < half) ? 2.0 * amp * std::sin(two_pi * pat.f1 * t + phase1)
                     : 2.0 * amp * std::sin(two_pi * pat.f2 * t + phase2);
    }
    double env = 1.0;
    if (n < ramp) env = 0.5 - 0.5 * std::cos(M_PI * n / ramp);
    int from_end = n_samples - 1 - n;
    if (from_end < ramp)
      env = std::min(env, 0.5 - 0.5 * std::cos(M_PI * from_end / ramp));
    out->push_back(static_cast<float>(v * env));
  }
}

std::vector<std::string> build_word_inventory(const SynthSpec& spec,
                                              std::mt19937_64& rng) {
  std::vector<std::string> words;
  std::set<std::string> seen;
  for (int i = 0; i < spec.n_symbols; ++i) {
    words.push_back(std::string(1, static_cast<char>('a' + i)));
    seen.insert(words.back());
  }
  int target = 3 * spec.n_symbols;
  std::uniform_int_distribution<int> len_dist(2, 3);
  std::uniform_int_distribution<int> sym_dist(0, spec.n_symbols - 1);
  int guard = 0;
  while (static_cast<int>(words.size()) < target && ++guard < 10000) {
    int len = len_dist(rng);
    std::string w;
    for (int i = 0; i < len; ++i)
      w.push_back(static_cast<char>('a' + sym_dist(rng)));
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

struct SplitGen {
  Manifest manifest;
  Alignments alignments;
};

SplitGen generate_split(const SynthSpec& spec, Split split, double hours,
                        const std::vector<SymbolPattern>& pats,
                        const std::vector<std::string>& words,
                        const std::string& wav_dir) {
  SplitGen gen;
  gen.manifest.split = split;
  if (hours <= 0) return gen;

  std::mt19937_64 rng(derive_seed(spec.seed, "synth/" + split_name(split)));
  // Zipf-ish word weights so BPE sees skewed pair frequencies.
  std::vector<double> cumw(words.size());
  double acc = 0;
  for (size_t i = 0; i < words.size(); ++i) {
    acc += 1.0 / static_cast<double>(i + 2);
    cumw[i] = acc;
  }

  const int unit_samples =
      static_cast<int>(std::lround(spec.unit_duration_ms / 1000.0 * spec.sample_rate));
  const int frames_per_unit = static_cast<int>(std::lround(spec.unit_duration_ms / 10.0));
  const double target_s = hours * 3600.0;
  const double amp = 0.22;

  std::uniform_int_distribution<int> len_dist(spec.min_symbols, spec.max_symbols);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double total_s = 0;
  int index = 0;
  while (total_s < target_s) {
    int target_len = len_dist(rng);
    std::vector<int> units;
    std::vector<std::string> transcript;
    while (static_cast<int>(units.size()) < target_len) {
      double r = unif(rng) * cumw.back();
      size_t wi = std::lower_bound(cumw.begin(), cumw.end(), r) - cumw.begin();
      const std::string& w = words[std::min(wi, words.size() - 1)];
      for (char c : w) units.push_back(c - 'a');
      transcript.push_back(w);
    }

    std::vector<float> samples;
    samples.reserve(units.size() * unit_samples);
    std::vector<int> align;
    align.reserve(units.size() * frames_per_unit);
    for (int u : units) {
      double jitter = 0.8 + 0.2 * unif(rng);
      render_unit(pats[u], unit_samples, spec.sample_rate, amp * jitter,
                  2.0 * M_PI * unif(rng), 2.0 * M_PI * unif(rng), &samples);
      for (int f = 0; f < frames_per_unit; ++f) align.push_back(u);
    }
    if (spec.noise_level > 0) {
      double nstd = spec.noise_level * amp;
      for (auto& s : samples) {
        double v = s + nstd * gauss(rng);
        s = static_cast<float>(std::clamp(v, -0.999, 0.999));
      }
    }

    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%05d", split_name(split).c_str(),
                  index++);
    Utterance utt;
    utt.id = idbuf;
    utt.audio_path = wav_dir + "/" + utt.id + ".wav";
    utt.duration = static_cast<double>(samples.size()) / spec.sample_rate;
    if (split != Split::pretrain) {
      std::string text;
      for (size_t i = 0; i < transcript.size(); ++i) {
        if (i) text += ' ';
        text += transcript[i];
      }
      utt.text = text;
    }
    AudioBuffer buf{std::move(samples), spec.sample_rate};
    write_wav(buf, utt.audio_path);
    gen.alignments[utt.id] = std::move(align);
    gen.manifest.utterances.push_back(std::move(utt));
    total_s += gen.manifest.utterances.back().duration;
  }
  return gen;
}

}  // namespace

SynthResult synth_corpus(const SynthSpec& spec, const std::string& out_dir) {
  spec.validate();
  auto pats = build_symbols(spec);
  std::mt19937_64 word_rng(derive_seed(spec.seed, "synth/words"));
  auto words = build_word_inventory(spec, word_rng);

  std::filesystem::create_directories(out_dir + "/wav");
  SynthResult res;
  res.word_inventory = words;
  Alignments all_align;

  struct SplitPlan { Split split; double hours; Manifest* out; };
  SplitPlan plans[] = {{Split::pretrain, spec.hours_pretrain, &res.pretrain},
                       {Split::finetune, spec.hours_finetune, &res.finetune},
                       {Split::test, spec.hours_test, &res.test}};
  for (auto& p : plans) {
    auto gen = generate_split(spec, p.split, p.hours, pats, words,
                              out_dir + "/wav");
    *p.out = gen.manifest;
    all_align.merge(gen.alignments);
    save_manifest(*p.out, out_dir + "/" + split_name(p.split) + ".jsonl");
  }
  res.alignments_path = out_dir + "/alignments.jsonl";
  save_alignments(all_align, res.alignments_path);
  return res;
}

}  // namespace sslasr
