// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <random>

#include "doctest.h"
#include "sslasr/common.hpp"
#include "sslasr/eval.hpp"

using namespace sslasr;

namespace {

// brute force: try every alignment recursively, return minimal total cost
int brute_cost(const std::vector<std::string>& ref,
               const std::vector<std::string>& hyp, size_t i, size_t j) {
  if (i == ref.size()) return static_cast<int>(hyp.size() - j);
  if (j == hyp.size()) return static_cast<int>(ref.size() - i);
  int match = brute_cost(ref, hyp, i + 1, j + 1) + (ref[i] == hyp[j] ? 0 : 1);
  int del = brute_cost(ref, hyp, i + 1, j) + 1;
  int ins = brute_cost(ref, hyp, i, j + 1) + 1;
  return std::min({match, del, ins});
}

std::vector<std::string> random_words(std::mt19937_64& rng, int max_len) {
  static const char* pool[] = {"a", "b", "c", "d"};
  std::vector<std::string> out;
  int len = static_cast<int>(rng() % (max_len + 1));
  for (int i = 0; i < len; ++i) out.push_back(pool[rng() % 4]);
  return out;
}

}  // namespace

TEST_CASE("edit distance basics") {
  CHECK(edit_distance({"a", "b", "c"}, {"a", "b", "c"}).total() == 0);
  EditCounts sub = edit_distance({"a", "b", "c"}, {"a", "x", "c"});
  CHECK(sub.sub == 1);
  CHECK(sub.del == 0);
  CHECK(sub.ins == 0);
  EditCounts del = edit_distance({"a", "b"}, {"a"});
  CHECK(del.del == 1);
  EditCounts ins = edit_distance({"a"}, {"a", "b"});
  CHECK(ins.ins == 1);
  CHECK(edit_distance({}, {}).total() == 0);
}

TEST_CASE("edit distance equals exhaustive alignment enumeration") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    auto ref = random_words(rng, 6);
    auto hyp = random_words(rng, 6);
    EditCounts c = edit_distance(ref, hyp);
    CHECK(c.total() == brute_cost(ref, hyp, 0, 0));
    CHECK(c.sub + c.del <= static_cast<int64_t>(ref.size()));
  }
}

TEST_CASE("swapping ref and hyp keeps S and exchanges D and I") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    auto ref = random_words(rng, 6);
    auto hyp = random_words(rng, 6);
    EditCounts a = edit_distance(ref, hyp);
    EditCounts b = edit_distance(hyp, ref);
    CHECK(a.total() == b.total());
    CHECK(a.sub == b.sub);
    CHECK(a.del == b.ins);
    CHECK(a.ins == b.del);
  }
}

namespace {

Manifest make_refs(const std::string& prefix,
                   const std::vector<std::string>& texts) {
  Manifest m;
  m.split = Split::test;
  for (size_t i = 0; i < texts.size(); ++i)
    m.utterances.push_back(
        {prefix + std::to_string(i), "none.wav", 1.0, texts[i]});
  return m;
}

}  // namespace

TEST_CASE("all-empty hypotheses give WER 1.0 (pure deletions)") {
  Manifest refs = make_refs("u", {"a b c", "d e"});
  std::map<std::string, std::string> hyps = {{"u0", ""}, {"u1", ""}};
  WerReport r = wer({{"set", refs}}, hyps);
  CHECK(r.sets[0].wer() == doctest::Approx(1.0));
  CHECK(r.sets[0].counts.del == 5);
  CHECK(r.weighted_average() == doctest::Approx(1.0));
}

TEST_CASE("weighted average follows the word-count formula") {
  // 10% WER over 90 words and 100% over 10 words -> (9 + 10) / 100 = 19%
  std::vector<std::string> long_words;
  for (int i = 0; i < 90; ++i) long_words.push_back("w" + std::to_string(i));
  std::string long_ref, long_hyp;
  for (int i = 0; i < 90; ++i) {
    long_ref += (i ? " " : "") + long_words[i];
    long_hyp += (i ? " " : "") + (i < 9 ? "x" : long_words[i]);  // 9 subs
  }
  std::string short_ref, short_hyp = "z z z z z z z z z z";
  for (int i = 0; i < 10; ++i) short_ref += (i ? " y" : "y");

  Manifest a = make_refs("a", {long_ref});
  Manifest b = make_refs("b", {short_ref});
  std::map<std::string, std::string> hyps = {{"a0", long_hyp},
                                             {"b0", short_hyp}};
  WerReport r = wer({{"long", a}, {"short", b}}, hyps);
  CHECK(r.sets[0].wer() == doctest::Approx(0.10));
  CHECK(r.sets[1].wer() == doctest::Approx(1.0));
  CHECK(r.weighted_average() == doctest::Approx(0.19));
}

TEST_CASE("three-set weighted aggregation matches the direct formula") {
  Manifest a = make_refs("a", {"a b c d", "e f"});
  Manifest b = make_refs("b", {"g h i"});
  Manifest c = make_refs("c", {"j", "k l"});
  std::map<std::string, std::string> hyps = {
      {"a0", "a b c d"}, {"a1", "e x"},    {"b0", "g h"},
      {"c0", "z"},       {"c1", "k l m"}};
  WerReport r = wer({{"A", a}, {"B", b}, {"C", c}}, hyps);
  int64_t errors = 0, words = 0;
  for (const auto& s : r.sets) {
    errors += s.counts.total();
    words += s.ref_words;
  }
  CHECK(words == 12);
  CHECK(r.weighted_average() == doctest::Approx(static_cast<double>(errors) / 12));
  // weighted average lies between the per-set extremes
  double lo = 1e9, hi = -1;
  for (const auto& s : r.sets) {
    lo = std::min(lo, s.wer());
    hi = std::max(hi, s.wer());
  }
  CHECK(r.weighted_average() >= lo);
  CHECK(r.weighted_average() <= hi);
}

TEST_CASE("missing hypothesis ids are reported") {
  Manifest refs = make_refs("u", {"a", "b"});
  std::map<std::string, std::string> hyps = {{"u0", "a"}};
  try {
    wer({{"set", refs}}, hyps);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("u1") != std::string::npos);
  }
}

TEST_CASE("normalization lowercases and collapses whitespace on both sides") {
  Manifest refs = make_refs("u", {"Hello   World"});
  std::map<std::string, std::string> hyps = {{"u0", "hello world "}};
  WerReport r = wer({{"set", refs}}, hyps);
  CHECK(r.sets[0].counts.total() == 0);
  CHECK(normalize_text("  A  b\tC ") == "a b c");
}

TEST_CASE("WER of a reference against itself is zero") {
  std::mt19937_64 rng(29);
  for (int t = 0; t < 50; ++t) {
    auto words = random_words(rng, 6);
    std::string text;
    for (auto& w : words) text += (text.empty() ? "" : " ") + w;
    if (text.empty()) text = "a";
    Manifest refs = make_refs("u", {text});
    std::map<std::string, std::string> hyps = {{"u0", text}};
    CHECK(wer({{"set", refs}}, hyps).weighted_average() == 0.0);
  }
}
