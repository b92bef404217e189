// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "sslasr/bpe.hpp"
#include "sslasr/common.hpp"
#include "test_util.hpp"

using namespace sslasr;

TEST_CASE("first merge on 'aaaa' joins the only repeated pair") {
  // base alphabet: {_a, a} + 2 specials = 4; room for exactly one merge
  BpeModel m = bpe_train({"aaaa"}, 5);
  REQUIRE(m.merges.size() == 1);
  CHECK(m.merges[0] == std::make_pair(std::string("a"), std::string("a")));
  CHECK(m.vocab_size() == 5);
}

TEST_CASE("merge order follows pair frequency (hand-counted oracle)") {
  // words: ab x3, ac x1. Pairs: (_a,b)=3, (_a,c)=1 -> the a-b join wins
  // (the word-initial marker folds into the first symbol).
  std::vector<std::string> corpus = {"ab ab ab ac"};
  BpeModel m = bpe_train(corpus, 7);  // specials 2 + base {_a,b,c} + 2 merges
  REQUIRE(m.merges.size() >= 1);
  CHECK(m.merges[0] == std::make_pair(std::string("_a"), std::string("b")));
}

TEST_CASE("frequency ties resolve to the lexicographically smallest pair") {
  // "xy" and "xz" both appear once: pairs (_x,y) and (_x,z) tie -> (_x,y)
  BpeModel m = bpe_train({"xy xz"}, 7);
  REQUIRE(!m.merges.empty());
  CHECK(m.merges[0] == std::make_pair(std::string("_x"), std::string("y")));
}

TEST_CASE("training is deterministic") {
  std::vector<std::string> corpus = {"abc abd", "bcd abc", "dd abc bcd"};
  BpeModel a = bpe_train(corpus, 12);
  BpeModel b = bpe_train(corpus, 12);
  CHECK(a.merges == b.merges);
  CHECK(a.vocab == b.vocab);
}

TEST_CASE("vocab size is exact; impossible sizes raise config errors") {
  std::vector<std::string> corpus = {"abab baba abba"};
  BpeModel m = bpe_train(corpus, 10);
  CHECK(m.vocab_size() == 10);
  CHECK_THROWS_AS(bpe_train(corpus, 3), ConfigError);    // below base alphabet
  CHECK_THROWS_AS(bpe_train({"ab"}, 50), ConfigError);   // merges run out
  CHECK_THROWS_AS(bpe_train({}, 10), DataError);         // empty corpus
}

TEST_CASE("encode/decode: identity on training text, unk on novel chars") {
  std::vector<std::string> corpus = {"hello world", "held low rolled"};
  BpeModel m = bpe_train(corpus, 24);

  CHECK(bpe_encode(m, "").empty());
  CHECK(bpe_decode(m, std::vector<int>{}) == "");

  for (const auto& s : corpus) {
    auto ids = bpe_encode(m, s);
    CHECK(bpe_decode(m, ids) == s);
    CHECK(ids.size() <= s.size());  // token count <= character count
    for (int id : ids) {
      CHECK(id != BpeModel::kBlankId);
      CHECK(id >= 0);
      CHECK(id < m.vocab_size());
    }
  }

  auto ids = bpe_encode(m, "heXlo");
  bool has_unk = false;
  for (int id : ids) has_unk |= (id == BpeModel::kUnkId);
  CHECK(has_unk);

  CHECK_THROWS_AS(bpe_decode(m, std::vector<int>{m.vocab_size()}), DataError);
  CHECK_THROWS_AS(bpe_decode(m, std::vector<int>{-1}), DataError);
}

TEST_CASE("model file round trip") {
  sslasr::testing::TempDir tmp("bpe_io");
  std::vector<std::string> corpus = {"spoken words become tokens",
                                     "tokens become words"};
  BpeModel m = bpe_train(corpus, 30);
  save_bpe(m, tmp.file("bpe.json"));
  BpeModel back = load_bpe(tmp.file("bpe.json"));
  CHECK(back.merges == m.merges);
  CHECK(back.vocab == m.vocab);
  for (const auto& s : corpus)
    CHECK(bpe_decode(back, bpe_encode(back, s)) == s);
}
