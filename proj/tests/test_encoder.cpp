// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "sslasr/common.hpp"
#include "sslasr/encoder.hpp"

using namespace sslasr;
using ad::Tape;
using ad::Tensor;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.d_model = {8};
  cfg.n_heads = 2;
  cfg.ff_multiplier = 2;
  cfg.stack_downsample = {1, 2};
  cfg.conv_embed_factor = 2;
  cfg.output_downsample_factor = 2;
  cfg.n_blocks_per_stack = 1;
  cfg.n_mels = 4;
  cfg.max_positions = 64;
  return cfg;
}

Tensor random_input(int T, int D, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1, 1);
  std::vector<double> v(static_cast<size_t>(T) * D);
  for (auto& x : v) x = dist(rng);
  return ad::make_leaf({T, D}, std::move(v), false);
}

}  // namespace

TEST_CASE("config validation") {
  EncoderConfig cfg = tiny_config();
  cfg.d_model = {7};
  cfg.n_heads = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // not divisible by heads
  cfg = tiny_config();
  cfg.stack_downsample = {1, 3};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // not a power of two
  cfg = tiny_config();
  cfg.d_model = {8, 16};  // two stacks at the same rate with different widths
  cfg.stack_downsample = {2, 2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.d_model = {8, 16, 8};
  cfg.stack_downsample = {1, 2, 1};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("initialization is deterministic and the parameter count is exact") {
  EncoderConfig cfg;
  cfg.d_model = {96};
  cfg.n_heads = 4;
  cfg.n_blocks_per_stack = 2;
  EncoderModel a = init_encoder(cfg, 5);
  EncoderModel b = init_encoder(cfg, 5);
  EncoderModel c = init_encoder(cfg, 6);
  REQUIRE(a.params.size() == b.params.size());
  bool all_equal = true, any_diff_seed = false;
  int64_t total = 0;
  for (size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i].first == b.params[i].first);
    if (a.params[i].second.values() != b.params[i].second.values())
      all_equal = false;
    if (a.params[i].second.values() != c.params[i].second.values())
      any_diff_seed = true;
    total += a.params[i].second.numel();
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);
  CHECK(total == parameter_count(cfg));

  EncoderConfig varied = tiny_config();
  varied.d_model = {8, 16, 8};
  varied.stack_downsample = {1, 2, 1};
  EncoderModel v = init_encoder(varied, 1);
  int64_t vtotal = 0;
  for (auto& [n, t] : v.params) vtotal += t.numel();
  CHECK(vtotal == parameter_count(varied));
}

TEST_CASE("conv embed length arithmetic and edge behaviour") {
  EncoderConfig cfg = tiny_config();
  EncoderModel model = init_encoder(cfg, 3);
  Tape tape(false);
  Tensor h = conv_embed(tape, model, random_input(100, 4, 1));
  CHECK(h.dim(0) == 50);
  CHECK(h.dim(1) == 8);

  // constant input: interior outputs are constant along time
  std::vector<double> v(60 * 4, 0.7);
  Tensor cst = ad::make_leaf({60, 4}, std::move(v), false);
  Tensor hc = conv_embed(tape, model, cst);
  for (int t = 2; t + 2 < hc.dim(0); ++t)
    for (int d = 0; d < 8; ++d)
      CHECK(hc.values()[static_cast<size_t>(t) * 8 + d] ==
            doctest::Approx(hc.values()[2 * 8 + d]).epsilon(1e-12));
}

TEST_CASE("causal conv embed never looks ahead") {
  EncoderConfig cfg = tiny_config();
  cfg.causal = true;
  EncoderModel model = init_encoder(cfg, 4);
  Tensor x = random_input(80, 4, 2);
  Tensor x2 = ad::make_leaf({80, 4}, std::vector<double>(x.values()), false);
  x2.values()[static_cast<size_t>(60) * 4 + 1] += 1.0;  // perturb frame 60

  Tape tape(false);
  Tensor a = conv_embed(tape, model, x);
  Tensor b = conv_embed(tape, model, x2);
  // output j depends on input frames <= 2j; outputs with 2j < 60 are intact
  bool changed_later = false;
  for (int j = 0; j < a.dim(0); ++j)
    for (int d = 0; d < 8; ++d) {
      double va = a.values()[static_cast<size_t>(j) * 8 + d];
      double vb = b.values()[static_cast<size_t>(j) * 8 + d];
      if (2 * j < 60)
        CHECK(va == vb);
      else if (va != vb)
        changed_later = true;
    }
  CHECK(changed_later);
}

TEST_CASE("chunked attention plan formula") {
  AttentionPlan full = chunked_attention_plan(6, kFullContext, kFullContext);
  for (int t = 0; t < 6; ++t) {
    CHECK(full.lo[t] == 0);
    CHECK(full.hi[t] == 5);
  }
  AttentionPlan p8 = chunked_attention_plan(8, 4, 4);
  for (int t = 0; t < 4; ++t) {
    CHECK(p8.lo[t] == 0);
    CHECK(p8.hi[t] == 3);
  }
  for (int t = 4; t < 8; ++t) {
    CHECK(p8.lo[t] == 0);
    CHECK(p8.hi[t] == 7);
  }
  AttentionPlan p12 = chunked_attention_plan(12, 4, 4);
  for (int t = 8; t < 12; ++t) {
    CHECK(p12.lo[t] == 4);
    CHECK(p12.hi[t] == 11);
  }
  // plan sanity: lo_t <= t <= hi_t
  for (int t = 0; t < 12; ++t) {
    CHECK(p12.lo[t] <= t);
    CHECK(p12.hi[t] >= t);
  }
}

TEST_CASE("plan spec frame conversion at the decode operating point") {
  PlanSpec spec{0.64, 5.12};
  AttentionPlan p = spec.at_rate(32, 25.0);
  CHECK(p.hi[0] == 15);  // 640 ms = 16 frames at 25 Hz
  CHECK(p.lo[16] == 0);  // 5120 ms = 128 frames of left context
  AttentionPlan q = spec.at_rate(8, 6.25);
  CHECK(q.hi[0] == 3);   // 4 frames at 6.25 Hz
  PlanSpec bad{0.05, 1.0};  // 0.3125 frames at 6.25 Hz
  CHECK_THROWS_AS(bad.at_rate(8, 6.25), ConfigError);
}

TEST_CASE("full-context plan equals a causal plan with an infinite chunk") {
  EncoderConfig cfg = tiny_config();
  EncoderModel model = init_encoder(cfg, 9);
  Tensor x = random_input(64, 4, 3);
  Tape t1(false), t2(false);
  StackOutputs a = encoder_forward(t1, model, x, 100.0, PlanSpec{});
  PlanSpec infinite{1638.4, 1638.4};
  StackOutputs b = encoder_forward(t2, model, x, 100.0, infinite);
  REQUIRE(a.final.numel() == b.final.numel());
  for (size_t i = 0; i < a.final.values().size(); ++i)
    CHECK(a.final.values()[i] ==
          doctest::Approx(b.final.values()[i]).epsilon(1e-6));
}

TEST_CASE("output and per-stack lengths follow the downsampling ladder") {
  EncoderConfig cfg;
  cfg.d_model = {16};
  cfg.n_heads = 2;
  cfg.ff_multiplier = 2;
  cfg.n_blocks_per_stack = 1;
  cfg.n_mels = 8;
  // defaults: stacks (1,2,4,8,4,2), conv factor 2, output factor 2
  EncoderModel model = init_encoder(cfg, 10);
  Tape tape(false);
  Tensor x = random_input(1000, 8, 4);
  StackOutputs out = encoder_forward(tape, model, x, 100.0, PlanSpec{});
  CHECK(out.final.dim(0) == 250);  // 10 s of audio -> 250 output frames
  CHECK(out.output_frame_rate == doctest::Approx(25.0));
  const int base = 500;
  REQUIRE(out.stacks.size() == 6);
  for (int s = 0; s < 6; ++s) {
    int ds = cfg.stack_downsample[s];
    CHECK(out.stacks[s].dim(0) == (base + ds - 1) / ds);
    CHECK(out.stack_rates[s] == doctest::Approx(50.0 / ds));
  }
}

TEST_CASE("extract_features: selectors, rates, determinism") {
  EncoderConfig cfg = tiny_config();
  EncoderModel model = init_encoder(cfg, 11);
  FeatureMatrix f;
  f.kind = FeatureKind::fbank;
  f.frame_rate = 100.0;
  f.m = Matrix(60, 4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (auto& v : f.m.v) v = dist(rng);

  FeatureMatrix fin = extract_features(
      model, f, static_cast<int>(FeatureSelector::final_output));
  CHECK(fin.kind == FeatureKind::latent);
  CHECK(fin.frame_rate == doctest::Approx(25.0));
  FeatureMatrix s1 = extract_features(model, f, 1);
  CHECK(s1.frame_rate == doctest::Approx(50.0 / cfg.stack_downsample[1]));
  FeatureMatrix again = extract_features(model, f, 1);
  CHECK(again.m.v == s1.m.v);
  CHECK_THROWS_AS(extract_features(model, f, 7), ConfigError);
}

TEST_CASE("causality: out-of-context future perturbations change nothing") {
  EncoderConfig cfg = tiny_config();
  cfg.causal = true;
  EncoderModel model = init_encoder(cfg, 12);
  PlanSpec plan{0.64, 5.12};

  Tensor x = random_input(200, 4, 6);
  Tensor xp = ad::make_leaf({200, 4}, std::vector<double>(x.values()), false);
  // chunk 0 covers input frames [0, 64); perturb the first frame of chunk 1
  for (int d = 0; d < 4; ++d)
    xp.values()[static_cast<size_t>(64) * 4 + d] += 2.0;

  Tape t1(false), t2(false);
  StackOutputs a = encoder_forward(t1, model, x, 100.0, plan);
  StackOutputs b = encoder_forward(t2, model, xp, 100.0, plan);
  // output rate 25 Hz -> chunk = 16 output frames; chunk 0 must be bit-equal
  int d_out = a.final.dim(1);
  bool later_changed = false;
  for (int t = 0; t < a.final.dim(0); ++t)
    for (int d = 0; d < d_out; ++d) {
      double va = a.final.values()[static_cast<size_t>(t) * d_out + d];
      double vb = b.final.values()[static_cast<size_t>(t) * d_out + d];
      if (t < 16)
        CHECK(va == vb);  // exactly zero change
      else if (va != vb)
        later_changed = true;
    }
  CHECK(later_changed);
}

TEST_CASE("gradcheck on a miniature encoder") {
  EncoderConfig cfg = tiny_config();
  cfg.max_positions = 16;
  EncoderModel model = init_encoder(cfg, 13);
  int64_t total = 0;
  for (auto& [n, t] : model.params) total += t.numel();
  CHECK(total <= 2000);

  Tensor x = random_input(12, 4, 7);
  std::vector<double> w;
  std::vector<int> out_shape;
  {
    Tape dry(false);
    StackOutputs out = encoder_forward(dry, model, x, 100.0, PlanSpec{});
    out_shape = out.final.shape();
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> dist(0.2, 1.7);
    w.resize(out.final.values().size());
    for (auto& v : w) v = dist(rng);
  }
  auto f = [&](Tape& tape) {
    StackOutputs out = encoder_forward(tape, model, x, 100.0, PlanSpec{});
    Tensor wt = ad::make_leaf(out_shape, std::vector<double>(w), false);
    return tape.sum(tape.mul(out.final, wt));
  };
  CHECK(ad::grad_check_params(f, model.parameters(), 1e-5) < 1e-3);
}
