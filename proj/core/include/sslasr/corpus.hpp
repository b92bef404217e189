// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_CORPUS_HPP
#define SSLASR_CORPUS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sslasr {

enum class Split { pretrain, finetune, test };
std::string split_name(Split s);

struct Utterance {
  std::string id;
  std::string audio_path;
  double duration = 0.0;  // seconds
  std::optional<std::string> text;
};

/// Ordered utterance list for one split. Ids are unique; the pretrain
/// split carries no transcripts, labeled splits always do.
struct Manifest {
  Split split = Split::pretrain;
  std::vector<Utterance> utterances;

  void validate() const;
  double total_duration() const;
};

/// JSON Lines, one utterance per line:
///   {"id": ..., "audio_path": ..., "duration": ..., "text"?: ...}
Manifest load_manifest(const std::string& path, Split split);
void save_manifest(const Manifest& m, const std::string& path);

/// Frame-level reference unit labels (one int per 10 ms frame), written as
/// JSON Lines {"id": ..., "units": [...]}. Used only by quality metrics.
using Alignments = std::map<std::string, std::vector<int>>;
Alignments load_alignments(const std::string& path);
void save_alignments(const Alignments& a, const std::string& path);

/// Synthetic corpus description.
///
/// Utterances are word sequences; words are short strings over an alphabet
/// of n_symbols acoustic units. Each unit is a fixed-duration narrowband
/// tone pattern, distinct per symbol. When n_confusable_pairs > 0, the last
/// 2*n pairs of symbols share their two tone bands and differ only in the
/// temporal order of the tones, so frame-wise spectral features cannot
/// separate them but a model with temporal context can.
struct SynthSpec {
  int n_symbols = 6;
  int min_symbols = 8;        // utterance length range, in symbols
  int max_symbols = 16;
  double unit_duration_ms = 120.0;  // multiple of 10 ms
  double noise_level = 0.1;         // noise std relative to tone amplitude
  double hours_pretrain = 0.1;
  double hours_finetune = 0.01;
  double hours_test = 0.01;
  uint64_t seed = 0;
  int n_confusable_pairs = 0;
  int sample_rate = 16000;

  void validate() const;
};

struct SynthResult {
  Manifest pretrain, finetune, test;
  std::string alignments_path;
  std::vector<std::string> word_inventory;
};

/// Generates wav files, the three split manifests, and frame-level
/// reference alignments under out_dir. Deterministic given spec.seed:
/// the same spec produces a byte-identical corpus.
SynthResult synth_corpus(const SynthSpec& spec, const std::string& out_dir);

}  // namespace sslasr

#endif  // SSLASR_CORPUS_HPP
