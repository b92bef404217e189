// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_EVAL_HPP
#define SSLASR_EVAL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sslasr/corpus.hpp"

namespace sslasr {

struct EditCounts {
  int64_t sub = 0, del = 0, ins = 0;
  int64_t total() const { return sub + del + ins; }
};

/// Minimal-cost word alignment with unit costs. When several alignments
/// are optimal the backtrace prefers substitution over insertion over
/// deletion, which makes the split deterministic.
EditCounts edit_distance(const std::vector<std::string>& ref,
                         const std::vector<std::string>& hyp);

/// Lowercases and collapses whitespace; applied to both sides of every
/// comparison.
std::string normalize_text(const std::string& s);
std::vector<std::string> tokenize_words(const std::string& s);

struct WerSet {
  std::string name;
  EditCounts counts;
  int64_t ref_words = 0;
  double wer() const {
    return ref_words == 0 ? 0.0
                          : static_cast<double>(counts.total()) / ref_words;
  }
};

struct WerReport {
  std::vector<WerSet> sets;
  /// Word-count-weighted average: sum of errors over sum of ref words.
  double weighted_average() const;
};

/// Scores hypotheses (id -> text) against one or more reference sets.
/// Every reference id must have a hypothesis entry; missing ids raise
/// DataError listing them.
WerReport wer(const std::vector<std::pair<std::string, Manifest>>& ref_sets,
              const std::map<std::string, std::string>& hyps);

std::string format_wer_table(const WerReport& report);

}  // namespace sslasr

#endif  // SSLASR_EVAL_HPP
