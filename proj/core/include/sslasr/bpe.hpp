// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_BPE_HPP
#define SSLASR_BPE_HPP

#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sslasr {

/// Byte-pair-encoding subword model over a character-level base alphabet.
/// Word-initial symbols carry a '_' marker so decode can restore spaces.
/// Id 0 is the transducer blank and is never produced by encode; id 1 is
/// the unknown symbol.
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;  // in train order
  std::vector<std::string> vocab;                           // id -> token
  std::unordered_map<std::string, int> token_to_id;

  static constexpr int kBlankId = 0;
  static constexpr int kUnkId = 1;
  static constexpr char kMarker = '_';

  int vocab_size() const { return static_cast<int>(vocab.size()); }
  void rebuild_index();
};

/// Greedy highest-frequency merge training; frequency ties choose the
/// lexicographically smallest pair. The vocabulary ends up with exactly
/// vocab_size entries or training fails with ConfigError.
BpeModel bpe_train(const std::vector<std::string>& texts, int vocab_size);

std::vector<int> bpe_encode(const BpeModel& model, const std::string& text);
std::string bpe_decode(const BpeModel& model, std::span<const int> ids);

/// Canonical-JSON model file (ordered merges + vocab).
void save_bpe(const BpeModel& model, const std::string& path);
BpeModel load_bpe(const std::string& path);

}  // namespace sslasr

#endif  // SSLASR_BPE_HPP
