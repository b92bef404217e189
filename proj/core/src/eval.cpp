// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/eval.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <sstream>

#include "sslasr/common.hpp"

namespace sslasr {

std::string normalize_text(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) pending_space = true;
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  return out;
}

std::vector<std::string> tokenize_words(const std::string& s) {
  std::vector<std::string> words;
  std::istringstream in(normalize_text(s));
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

EditCounts edit_distance(const std::vector<std::string>& ref,
                         const std::vector<std::string>& hyp) {
  const int R = static_cast<int>(ref.size());
  const int H = static_cast<int>(hyp.size());
  // cost[i][j]: min edits aligning ref[0..i) with hyp[0..j)
  std::vector<std::vector<int>> cost(R + 1, std::vector<int>(H + 1, 0));
  for (int i = 1; i <= R; ++i) cost[i][0] = i;
  for (int j = 1; j <= H; ++j) cost[0][j] = j;
  for (int i = 1; i <= R; ++i) {
    for (int j = 1; j <= H; ++j) {
      int match = cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cost[i][j] = std::min({match, cost[i][j - 1] + 1, cost[i - 1][j] + 1});
    }
  }
  EditCounts c;
  int i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.sub;
      --i;
      --j;
    } else if (j > 0 && cost[i][j] == cost[i][j - 1] + 1) {
      ++c.ins;
      --j;
    } else {
      ++c.del;
      --i;
    }
  }
  return c;
}

double WerReport::weighted_average() const {
  int64_t errors = 0, words = 0;
  for (const auto& s : sets) {
    errors += s.counts.total();
    words += s.ref_words;
  }
  return words == 0 ? 0.0 : static_cast<double>(errors) / words;
}

WerReport wer(const std::vector<std::pair<std::string, Manifest>>& ref_sets,
              const std::map<std::string, std::string>& hyps) {
  WerReport report;
  std::string missing;
  for (const auto& [name, manifest] : ref_sets) {
    WerSet set;
    set.name = name;
    for (const auto& u : manifest.utterances) {
      if (!u.text)
        throw DataError("wer: reference without transcript: " + u.id);
      auto hit = hyps.find(u.id);
      if (hit == hyps.end()) {
        missing += missing.empty() ? u.id : ", " + u.id;
        continue;
      }
      auto ref = tokenize_words(*u.text);
      auto hyp = tokenize_words(hit->second);
      auto counts = edit_distance(ref, hyp);
      set.counts.sub += counts.sub;
      set.counts.del += counts.del;
      set.counts.ins += counts.ins;
      set.ref_words += static_cast<int64_t>(ref.size());
    }
    report.sets.push_back(std::move(set));
  }
  if (!missing.empty())
    throw DataError("wer: missing hypotheses for ids: " + missing);
  return report;
}

std::string format_wer_table(const WerReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "set" << std::right << std::setw(8)
      << "words" << std::setw(7) << "sub" << std::setw(7) << "del"
      << std::setw(7) << "ins" << std::setw(9) << "WER%" << "\n";
  for (const auto& s : report.sets) {
    out << std::left << std::setw(16) << s.name << std::right << std::setw(8)
        << s.ref_words << std::setw(7) << s.counts.sub << std::setw(7)
        << s.counts.del << std::setw(7) << s.counts.ins << std::setw(9)
        << std::fixed << std::setprecision(2) << 100.0 * s.wer() << "\n";
  }
  out << std::left << std::setw(16) << "weighted-avg" << std::right
      << std::setw(38) << "" << std::setw(9) << std::fixed
      << std::setprecision(2) << 100.0 * report.weighted_average() << "\n";
  return out.str();
}

}  // namespace sslasr
