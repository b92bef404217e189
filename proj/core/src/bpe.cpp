// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/bpe.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sslasr/common.hpp"

namespace sslasr {

using nlohmann::json;

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

// Base segmentation: each character is one symbol, the word-initial one
// prefixed with the marker.
std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> syms;
  syms.reserve(word.size());
  for (size_t i = 0; i < word.size(); ++i) {
    std::string s(1, word[i]);
    if (i == 0) s = std::string(1, BpeModel::kMarker) + s;
    syms.push_back(s);
  }
  return syms;
}

void apply_merge(std::vector<std::string>* syms,
                 const std::pair<std::string, std::string>& m) {
  std::vector<std::string> out;
  out.reserve(syms->size());
  size_t i = 0;
  while (i < syms->size()) {
    if (i + 1 < syms->size() && (*syms)[i] == m.first &&
        (*syms)[i + 1] == m.second) {
      out.push_back(m.first + m.second);
      i += 2;
    } else {
      out.push_back((*syms)[i]);
      ++i;
    }
  }
  *syms = std::move(out);
}

}  // namespace

void BpeModel::rebuild_index() {
  token_to_id.clear();
  for (size_t i = 0; i < vocab.size(); ++i)
    token_to_id[vocab[i]] = static_cast<int>(i);
}

BpeModel bpe_train(const std::vector<std::string>& texts, int vocab_size) {
  std::map<std::string, int64_t> word_freq;
  for (const auto& t : texts)
    for (const auto& w : split_words(t)) {
      if (w.find(BpeModel::kMarker) != std::string::npos)
        throw DataError("bpe: corpus contains the reserved marker character");
      ++word_freq[w];
    }
  if (word_freq.empty()) throw DataError("bpe: empty training corpus");

  std::set<std::string> base;
  std::vector<std::pair<std::vector<std::string>, int64_t>> words;
  for (const auto& [w, f] : word_freq) {
    auto syms = word_symbols(w);
    for (const auto& s : syms) base.insert(s);
    words.emplace_back(std::move(syms), f);
  }

  BpeModel model;
  model.vocab = {"<blk>", "<unk>"};
  for (const auto& s : base) model.vocab.push_back(s);
  if (vocab_size < model.vocab_size())
    throw ConfigError("bpe: vocab_size " + std::to_string(vocab_size) +
                      " smaller than base alphabet plus specials (" +
                      std::to_string(model.vocab_size()) + ")");

  while (model.vocab_size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, int64_t> pair_freq;
    for (const auto& [syms, f] : words)
      for (size_t i = 0; i + 1 < syms.size(); ++i)
        pair_freq[{syms[i], syms[i + 1]}] += f;
    if (pair_freq.empty())
      throw ConfigError("bpe: corpus exhausted before reaching vocab_size");
    // Highest frequency; the map's key order breaks ties lexicographically.
    auto best = pair_freq.begin();
    for (auto it = pair_freq.begin(); it != pair_freq.end(); ++it)
      if (it->second > best->second) best = it;
    model.merges.push_back(best->first);
    model.vocab.push_back(best->first.first + best->first.second);
    for (auto& [syms, f] : words) apply_merge(&syms, best->first);
  }
  model.rebuild_index();
  return model;
}

std::vector<int> bpe_encode(const BpeModel& model, const std::string& text) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) {
    auto syms = word_symbols(w);
    for (const auto& m : model.merges) apply_merge(&syms, m);
    for (const auto& s : syms) {
      auto it = model.token_to_id.find(s);
      ids.push_back(it == model.token_to_id.end() ? BpeModel::kUnkId
                                                  : it->second);
    }
  }
  return ids;
}

std::string bpe_decode(const BpeModel& model, std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= model.vocab_size())
      throw DataError("bpe: id out of range: " + std::to_string(id));
    const std::string& tok = model.vocab[id];
    if (!tok.empty() && tok[0] == BpeModel::kMarker) {
      if (!out.empty()) out += ' ';
      out += tok.substr(1);
    } else {
      out += tok;
    }
  }
  return out;
}

void save_bpe(const BpeModel& model, const std::string& path) {
  json j;
  j["merges"] = json::array();
  for (const auto& [a, b] : model.merges)
    j["merges"].push_back(json::array({a, b}));
  j["vocab"] = model.vocab;
  write_text_file(path, j.dump(2) + "\n");
}

BpeModel load_bpe(const std::string& path) {
  json j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw FormatError("bpe: corrupt model file " + path);
  BpeModel model;
  for (const auto& m : j.at("merges"))
    model.merges.emplace_back(m.at(0).get<std::string>(),
                              m.at(1).get<std::string>());
  model.vocab = j.at("vocab").get<std::vector<std::string>>();
  if (model.vocab.size() < 2 || model.vocab[0] != "<blk>" ||
      model.vocab[1] != "<unk>")
    throw FormatError("bpe: model file missing reserved specials " + path);
  model.rebuild_index();
  return model;
}

}  // namespace sslasr
