// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "sslasr/codebook.hpp"
#include "sslasr/common.hpp"
#include "test_util.hpp"

using namespace sslasr;
using sslasr::testing::TempDir;

namespace {

// three tight, well-separated 2-D blobs; the generator is the oracle
void make_blobs(std::vector<double>* data, std::vector<int>* truth, int per,
                uint64_t seed) {
  const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.05);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < per; ++i) {
      data->push_back(centers[c][0] + g(rng));
      data->push_back(centers[c][1] + g(rng));
      truth->push_back(c);
    }
}

}  // namespace

TEST_CASE("kmeans with k = N distinct points has zero inertia") {
  std::vector<double> data = {0, 0, 1, 0, 0, 1, 5, 5};
  Codebook cb = kmeans_fit(data, 4, 2, 4, 20, 3);
  CHECK(cb.meta.inertia == doctest::Approx(0.0));
  Matrix f(4, 2);
  f.v = data;
  auto labels = assign(f, cb);
  std::set<int> unique(labels.begin(), labels.end());
  CHECK(unique.size() == 4);
}

TEST_CASE("kmeans recovers separated blobs exactly") {
  std::vector<double> data;
  std::vector<int> truth;
  make_blobs(&data, &truth, 60, 17);
  Codebook cb = kmeans_fit(data, 180, 2, 3, 50, 7);
  Matrix f(180, 2);
  f.v = data;
  auto labels = assign(f, cb);
  // partition must match the generator up to relabeling
  std::map<int, int> mapping;
  int mismatches = 0;
  for (int i = 0; i < 180; ++i) {
    auto [it, fresh] = mapping.emplace(truth[i], labels[i]);
    if (!fresh && it->second != labels[i]) ++mismatches;
  }
  CHECK(mismatches == 0);
  CHECK(mapping.size() == 3);
}

TEST_CASE("kmeans inertia history is non-increasing") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> d(-5, 5);
  std::vector<double> data(400 * 3);
  for (auto& v : data) v = d(rng);
  Codebook cb = kmeans_fit(data, 400, 3, 8, 40, 5);
  REQUIRE(cb.meta.inertia_history.size() >= 2);
  for (size_t i = 1; i < cb.meta.inertia_history.size(); ++i)
    CHECK(cb.meta.inertia_history[i] <= cb.meta.inertia_history[i - 1] + 1e-9);
  CHECK(cb.meta.inertia == cb.meta.inertia_history.back());
}

TEST_CASE("kmeans is deterministic given the seed and errors when N < k") {
  std::vector<double> data;
  std::vector<int> truth;
  make_blobs(&data, &truth, 20, 9);
  Codebook a = kmeans_fit(data, 60, 2, 5, 30, 42);
  Codebook b = kmeans_fit(data, 60, 2, 5, 30, 42);
  CHECK(a.centroids == b.centroids);
  CHECK(a.meta.inertia_history == b.meta.inertia_history);
  CHECK_THROWS_AS(kmeans_fit(data, 4, 2, 5, 30, 42), DataError);
}

TEST_CASE("assign: identity on centroids, lowest-index ties, naive-scan oracle") {
  Codebook cb;
  cb.k = 3;
  cb.dim = 2;
  cb.centroids = {0, 0, 2, 0, 4, 0};
  Matrix exact(3, 2);
  exact.v = {0, 0, 2, 0, 4, 0};
  CHECK(assign(exact, cb) == std::vector<int>{0, 1, 2});

  Matrix tie(1, 2);
  tie.v = {1, 0};  // equidistant to centroids 0 and 1
  CHECK(assign(tie, cb)[0] == 0);

  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> d(-5, 5);
  Matrix f(50, 2);
  for (auto& v : f.v) v = d(rng);
  auto fast = assign(f, cb);
  for (int t = 0; t < 50; ++t) {
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int i = 0; i < 2; ++i) {
        double diff = f.at(t, i) - cb.centroids[c * 2 + i];
        acc += diff * diff;
      }
      if (acc < best_d) {
        best_d = acc;
        best = c;
      }
    }
    CHECK(fast[t] == best);
  }

  Matrix wrong(1, 3);
  CHECK_THROWS_AS(assign(wrong, cb), DimError);
}

TEST_CASE("assign is invariant to joint scaling of features and centroids") {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> d(-2, 2);
  Codebook cb;
  cb.k = 4;
  cb.dim = 3;
  cb.centroids.resize(12);
  for (auto& v : cb.centroids) v = static_cast<float>(d(rng));
  Matrix f(30, 3);
  for (auto& v : f.v) v = d(rng);

  auto base = assign(f, cb);
  Codebook scaled = cb;
  for (auto& v : scaled.centroids) v *= 3.0f;
  Matrix fs = f;
  for (auto& v : fs.v) v *= 3.0;
  CHECK(assign(fs, scaled) == base);
}

TEST_CASE("codebook file round trip preserves assignments exactly") {
  TempDir tmp("codebook_io");
  std::vector<double> data;
  std::vector<int> truth;
  make_blobs(&data, &truth, 30, 5);
  Codebook cb = kmeans_fit(data, 90, 2, 3, 30, 11);
  cb.feature_kind = FeatureKind::fbank;
  cb.frame_rate = 100.0;
  save_codebook(cb, tmp.file("cb.bin"));
  Codebook back = load_codebook(tmp.file("cb.bin"));
  CHECK(back.k == 3);
  CHECK(back.dim == 2);
  CHECK(back.feature_kind == FeatureKind::fbank);
  CHECK(back.frame_rate == doctest::Approx(100.0));
  CHECK(back.centroids == cb.centroids);
  CHECK(back.meta.inertia == doctest::Approx(cb.meta.inertia));
  Matrix f(90, 2);
  f.v = data;
  CHECK(assign(f, back) == assign(f, cb));
}

TEST_CASE("label store: append, reopen, idempotent rerun") {
  TempDir tmp("labelstore");
  {
    LabelStore store = LabelStore::open(tmp.file("l.bin"));
    store.add("u1", 100.0, {1, 2, 3});
    store.add("u1", 100.0, {9, 9, 9});  // ignored: already present
    store.add("u2", 100.0, {4});
  }
  LabelStore store = LabelStore::open(tmp.file("l.bin"));
  CHECK(store.size() == 2);
  CHECK(store.at("u1").labels == std::vector<uint16_t>{1, 2, 3});
  CHECK(store.at("u2").labels == std::vector<uint16_t>{4});
  CHECK(store.at("u1").frame_rate == doctest::Approx(100.0));
  CHECK_THROWS_AS(store.at("zzz"), DataError);
}

TEST_CASE("extract_labels_for_corpus: empty manifest, resume, failure logging") {
  TempDir tmp("extract");
  Codebook cb;
  cb.k = 2;
  cb.dim = 2;
  cb.centroids = {0, 0, 10, 10};
  cb.feature_kind = FeatureKind::latent;
  cb.frame_rate = 50.0;

  auto fn = [](const Utterance& u) -> FeatureMatrix {
    if (u.id == "bad") throw DataError("synthetic failure");
    FeatureMatrix f;
    f.kind = FeatureKind::latent;
    f.frame_rate = 50.0;
    f.m = Matrix(2, 2);
    f.m.v = {0.1, 0.1, 9.5, 9.5};
    return f;
  };

  Manifest empty;
  LabelStore store0 = LabelStore::open(tmp.file("empty.bin"));
  auto rep0 = extract_labels_for_corpus(fn, empty, cb, &store0);
  CHECK(rep0.written == 0);
  CHECK(store0.size() == 0);

  Manifest m;
  m.split = Split::pretrain;
  m.utterances = {{"u1", "p", 1.0, std::nullopt},
                  {"bad", "p", 1.0, std::nullopt},
                  {"u2", "p", 1.0, std::nullopt}};
  LabelStore store = LabelStore::open(tmp.file("l.bin"));
  auto rep = extract_labels_for_corpus(fn, m, cb, &store);
  CHECK(rep.written == 2);
  CHECK(rep.failed_ids == std::vector<std::string>{"bad"});
  CHECK(store.at("u1").labels == std::vector<uint16_t>{0, 1});

  uint64_t before = fnv1a64_file(tmp.file("l.bin"));
  auto rep2 = extract_labels_for_corpus(fn, m, cb, &store);
  CHECK(rep2.written == 0);
  CHECK(rep2.skipped_existing == 2);
  CHECK(fnv1a64_file(tmp.file("l.bin")) == before);  // nothing rewritten
}

TEST_CASE("pool_labels: majority with lowest-id ties, both directions") {
  CHECK(pool_labels({2, 2, 7, 7}, 100, 25, 1) == std::vector<int>{2});
  CHECK(pool_labels({1, 1, 1, 0, 5, 5, 5, 5}, 100, 25, 2) ==
        std::vector<int>{1, 5});
  // identity when rates match
  CHECK(pool_labels({3, 1, 4}, 25, 25, 3) == std::vector<int>{3, 1, 4});
  // upsampling repeats the covering label
  CHECK(pool_labels({3, 1}, 25, 50, 4) == std::vector<int>{3, 3, 1, 1});
  CHECK_THROWS_AS(pool_labels({1, 2, 3}, 30, 25, 3), ConfigError);
}

TEST_CASE("codebook_quality: perfect, random and single-cluster labelings") {
  // perfect labels: purity and PNMI are 1
  TempDir tmp("quality");
  Alignments ref;
  LabelStore perfect = LabelStore::open(tmp.file("perfect.bin"));
  std::mt19937_64 rng(3);
  for (int u = 0; u < 6; ++u) {
    std::string id = "u" + std::to_string(u);
    std::vector<int> units;
    std::vector<uint16_t> labels;
    for (int t = 0; t < 200; ++t) {
      int unit = static_cast<int>(rng() % 4);
      units.push_back(unit);
      labels.push_back(static_cast<uint16_t>(unit));
    }
    ref[id] = units;
    perfect.add(id, 100.0, labels);
  }
  ClusterMetrics pm = codebook_quality(perfect, ref);
  CHECK(pm.purity == doctest::Approx(1.0));
  CHECK(pm.pnmi == doctest::Approx(1.0).epsilon(1e-9));

  // uniform random labels: PNMI near zero (Monte-Carlo oracle)
  LabelStore random_store = LabelStore::open(tmp.file("random.bin"));
  std::mt19937_64 rng2(4);
  Alignments ref2;
  for (int u = 0; u < 5; ++u) {
    std::string id = "r" + std::to_string(u);
    std::vector<int> units;
    std::vector<uint16_t> labels;
    for (int t = 0; t < 2000; ++t) {
      units.push_back(static_cast<int>(rng2() % 4));
      labels.push_back(static_cast<uint16_t>(rng2() % 8));
    }
    ref2[id] = units;
    random_store.add(id, 100.0, labels);
  }
  ClusterMetrics rm = codebook_quality(random_store, ref2);
  CHECK(rm.pnmi < 0.05);

  // a single cluster's purity is the most common unit's frequency
  LabelStore single = LabelStore::open(tmp.file("single.bin"));
  std::vector<int> units = {0, 0, 0, 1, 1, 2, 2, 2, 2, 2};
  Alignments ref3{{"s", units}};
  single.add("s", 100.0, std::vector<uint16_t>(10, 0));
  ClusterMetrics sm = codebook_quality(single, ref3);
  CHECK(sm.purity == doctest::Approx(0.5));

  LabelStore empty = LabelStore::open(tmp.file("none.bin"));
  CHECK_THROWS_AS(codebook_quality(empty, ref), DataError);
}
