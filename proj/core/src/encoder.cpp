// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "sslasr/common.hpp"

namespace sslasr {

using ad::Tape;
using ad::Tensor;

namespace {

bool power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

int conv_out_len(int T, int stride) { return (T - 1) / stride + 1; }

int n_conv_stages(int factor) {
  int n = 0;
  while (factor > 1) {
    factor /= 2;
    ++n;
  }
  return std::max(n, 1);
}

// Length of the sequence at a pooled factor, by repeated ceil-halving.
int len_at_factor(int base_len, int factor) {
  int len = base_len;
  while (factor > 1) {
    len = (len + 1) / 2;
    factor /= 2;
  }
  return len;
}

}  // namespace

void EncoderConfig::validate() const {
  if (stack_downsample.empty())
    throw ConfigError("encoder: stack_downsample must be non-empty");
  for (int f : stack_downsample)
    if (!power_of_two(f))
      throw ConfigError("encoder: stack downsample factors must be powers of two");
  if (!power_of_two(conv_embed_factor) || conv_embed_factor > 4)
    throw ConfigError("encoder: conv_embed_factor must be 1, 2 or 4");
  if (!power_of_two(output_downsample_factor))
    throw ConfigError("encoder: output_downsample_factor must be a power of two");
  if (d_model.size() != 1 &&
      d_model.size() != stack_downsample.size())
    throw ConfigError("encoder: d_model must have one entry or one per stack");
  for (size_t s = 0; s < stack_downsample.size(); ++s) {
    int d = width(static_cast<int>(s));
    if (d <= 0 || d % n_heads != 0)
      throw ConfigError("encoder: d_model must be positive and divisible by n_heads");
  }
  // Skip connections add same-rate sequences, so widths must agree per rate.
  std::map<int, int> rate_width;
  for (int s = 0; s < n_stacks(); ++s) {
    auto [it, fresh] = rate_width.emplace(stack_downsample[s], width(s));
    if (!fresh && it->second != width(s))
      throw ConfigError("encoder: stacks at the same rate must share d_model");
  }
  if (stack_downsample.front() == 1 &&
      width(0) != width(n_stacks() - 1))
    throw ConfigError("encoder: first and last stack widths must match for the base-rate skip");
  if (n_blocks_per_stack < 1)
    throw ConfigError("encoder: n_blocks_per_stack must be >= 1");
  if (ff_multiplier < 1) throw ConfigError("encoder: ff_multiplier must be >= 1");
  if (n_mels < 1 || max_positions < 1)
    throw ConfigError("encoder: bad n_mels/max_positions");
}

const Tensor& EncoderModel::p(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end())
    throw DataError("encoder: unknown parameter " + name);
  return params[it->second].second;
}

std::vector<Tensor> EncoderModel::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

void EncoderModel::rebuild_index() {
  index.clear();
  for (size_t i = 0; i < params.size(); ++i) index[params[i].first] = i;
}

namespace {

struct ParamBuilder {
  std::mt19937_64 rng;
  std::vector<std::pair<std::string, Tensor>>* out;

  void uniform(const std::string& name, std::vector<int> shape, double bound) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    std::vector<double> v(n);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : v) x = dist(rng);
    out->emplace_back(name, ad::make_leaf(std::move(shape), std::move(v), true));
  }
  void fanin(const std::string& name, int in, int cols) {
    uniform(name, {in, cols}, 1.0 / std::sqrt(static_cast<double>(in)));
  }
  void constant(const std::string& name, std::vector<int> shape, double c) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    out->emplace_back(name,
                      ad::make_leaf(std::move(shape),
                                    std::vector<double>(n, c), true));
  }
};

std::string stk(int s) { return "stk" + std::to_string(s); }

}  // namespace

EncoderModel init_encoder(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  EncoderModel model;
  model.config = cfg;
  ParamBuilder b{std::mt19937_64(derive_seed(seed, "encoder")), &model.params};

  // Conv-Embed
  int stages = n_conv_stages(cfg.conv_embed_factor);
  int d0 = cfg.width(0);
  for (int c = 0; c < stages; ++c) {
    int in = (c == 0) ? cfg.n_mels : d0;
    b.uniform("conv" + std::to_string(c) + ".w", {d0, 3 * in},
              1.0 / std::sqrt(3.0 * in));
    b.constant("conv" + std::to_string(c) + ".b", {1, d0}, 0.0);
  }

  int prev_width = d0;
  for (int s = 0; s < cfg.n_stacks(); ++s) {
    int d = cfg.width(s);
    if (d != prev_width) b.fanin("trans" + std::to_string(s) + ".w", prev_width, d);
    prev_width = d;
    b.uniform(stk(s) + ".pos", {cfg.max_positions, d}, 0.05);
    for (int i = 0; i < cfg.n_blocks_per_stack; ++i) {
      std::string pre = stk(s) + ".blk" + std::to_string(i) + ".";
      b.constant(pre + "ln1.g", {1, d}, 1.0);
      b.constant(pre + "ln1.b", {1, d}, 0.0);
      for (const char* w : {"att.wq", "att.wk", "att.wv", "att.wo"})
        b.fanin(pre + w, d, d);
      // no key bias: softmax rows are invariant to a constant key shift
      for (const char* bias : {"att.bq", "att.bv", "att.bo"})
        b.constant(pre + bias, {1, d}, 0.0);
      b.constant(pre + "ln2.g", {1, d}, 1.0);
      b.constant(pre + "ln2.b", {1, d}, 0.0);
      b.fanin(pre + "ff.w1", d, cfg.ff_multiplier * d);
      b.constant(pre + "ff.b1", {1, cfg.ff_multiplier * d}, 0.0);
      b.fanin(pre + "ff.w2", cfg.ff_multiplier * d, d);
      b.constant(pre + "ff.b2", {1, d}, 0.0);
    }
  }
  int dl = cfg.output_dim();
  b.constant("out.ln.g", {1, dl}, 1.0);
  b.constant("out.ln.b", {1, dl}, 0.0);
  b.fanin("out.w", dl, dl);
  b.constant("out.b", {1, dl}, 0.0);

  model.rebuild_index();
  return model;
}

int64_t parameter_count(const EncoderConfig& cfg) {
  // conv stages: d0*(3*in) + d0 each; per stack: optional prev*d transition,
  // max_positions*d positions, and per block
  //   2*2d (ln1) + 4*d^2 + 4*d (attention) + 2*2d (ln2)
  //   + d*ff*d + ff*d + ff*d*d + d (feed-forward);
  // output head: 2*dl + dl^2 + dl.
  int64_t n = 0;
  int stages = n_conv_stages(cfg.conv_embed_factor);
  int64_t d0 = cfg.width(0);
  for (int c = 0; c < stages; ++c) {
    int64_t in = (c == 0) ? cfg.n_mels : d0;
    n += d0 * 3 * in + d0;
  }
  int64_t prev = d0;
  for (int s = 0; s < cfg.n_stacks(); ++s) {
    int64_t d = cfg.width(s);
    if (d != prev) n += prev * d;
    prev = d;
    n += static_cast<int64_t>(cfg.max_positions) * d;
    int64_t ff = cfg.ff_multiplier;
    n += cfg.n_blocks_per_stack *
         (2 * d + (4 * d * d + 3 * d) + 2 * d + (2 * ff * d * d + ff * d + d));
  }
  int64_t dl = cfg.output_dim();
  n += 2 * dl + dl * dl + dl;
  return n;
}

AttentionPlan chunked_attention_plan(int length, int chunk_frames,
                                     int left_context_frames) {
  if (chunk_frames < 1) throw ConfigError("attention plan: chunk_frames must be >= 1");
  if (left_context_frames < 0)
    throw ConfigError("attention plan: negative left context");
  AttentionPlan plan;
  plan.length = length;
  plan.lo.resize(length);
  plan.hi.resize(length);
  for (int t = 0; t < length; ++t) {
    int64_t chunk_start = (static_cast<int64_t>(t) / chunk_frames) * chunk_frames;
    int64_t chunk_end = chunk_start + chunk_frames - 1;
    plan.lo[t] = static_cast<int>(
        std::max<int64_t>(0, chunk_start - left_context_frames));
    plan.hi[t] = static_cast<int>(std::min<int64_t>(length - 1, chunk_end));
  }
  return plan;
}

AttentionPlan PlanSpec::at_rate(int length, double rate) const {
  if (full_context())
    return chunked_attention_plan(length, kFullContext, kFullContext);
  double cf = *chunk_s * rate;
  if (std::fabs(cf - std::round(cf)) > 1e-6 || cf < 1.0)
    throw ConfigError(
        "attention plan: chunk must cover a whole number of frames at every "
        "internal rate");
  int left = kFullContext;
  if (left_context_s) {
    double lf = *left_context_s * rate;
    if (std::fabs(lf - std::round(lf)) > 1e-6)
      throw ConfigError(
          "attention plan: left context must cover a whole number of frames "
          "at every internal rate");
    left = static_cast<int>(std::llround(lf));
  }
  return chunked_attention_plan(length, static_cast<int>(std::llround(cf)),
                                left);
}

namespace {

// Additive attention bias from a plan: 0 inside [lo, hi], -1e30 outside
// (exp underflows to exactly 0, so out-of-plan keys contribute nothing).
Tensor plan_bias(const AttentionPlan& plan) {
  int T = plan.length;
  std::vector<double> bias(static_cast<size_t>(T) * T, -1e30);
  for (int t = 0; t < T; ++t)
    for (int j = plan.lo[t]; j <= plan.hi[t]; ++j)
      bias[static_cast<size_t>(t) * T + j] = 0.0;
  return ad::make_leaf({T, T}, std::move(bias), false);
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  return tape.add(tape.matmul(x, w), b);
}

Tensor attention_block(Tape& tape, const EncoderModel& model,
                       const std::string& pre, Tensor x, const Tensor& bias,
                       int n_heads) {
  int d = x.dim(1);
  int dh = d / n_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor a = tape.layer_norm(x, model.p(pre + "ln1.g"), model.p(pre + "ln1.b"));
  Tensor q = linear(tape, a, model.p(pre + "att.wq"), model.p(pre + "att.bq"));
  Tensor k = tape.matmul(a, model.p(pre + "att.wk"));
  Tensor v = linear(tape, a, model.p(pre + "att.wv"), model.p(pre + "att.bv"));

  Tensor ctx;
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = tape.slice(q, 0, q.dim(0), h * dh, (h + 1) * dh);
    Tensor kh = tape.slice(k, 0, k.dim(0), h * dh, (h + 1) * dh);
    Tensor vh = tape.slice(v, 0, v.dim(0), h * dh, (h + 1) * dh);
    Tensor scores = tape.scalar_mul(tape.matmul(qh, kh, true), scale);
    scores = tape.add(scores, bias);
    Tensor probs = tape.softmax(scores);
    Tensor ch = tape.matmul(probs, vh);
    ctx = h == 0 ? ch : tape.concat(ctx, ch, 1);
  }
  Tensor att =
      linear(tape, ctx, model.p(pre + "att.wo"), model.p(pre + "att.bo"));
  x = tape.add(x, att);

  Tensor f = tape.layer_norm(x, model.p(pre + "ln2.g"), model.p(pre + "ln2.b"));
  f = tape.swish(linear(tape, f, model.p(pre + "ff.w1"), model.p(pre + "ff.b1")));
  f = linear(tape, f, model.p(pre + "ff.w2"), model.p(pre + "ff.b2"));
  return tape.add(x, f);
}

}  // namespace

Tensor conv_embed(Tape& tape, const EncoderModel& model, const Tensor& x) {
  const auto& cfg = model.config;
  if (x.dim(1) != cfg.n_mels)
    throw DimError("encoder: input dim does not match n_mels");
  int stages = n_conv_stages(cfg.conv_embed_factor);
  Tensor h = x;
  for (int c = 0; c < stages; ++c) {
    int stride = cfg.conv_embed_factor == 1 ? 1 : 2;
    h = tape.conv1d(h, model.p("conv" + std::to_string(c) + ".w"),
                    model.p("conv" + std::to_string(c) + ".b"), 3, stride,
                    cfg.causal);
    h = tape.swish(h);
  }
  return h;
}

StackOutputs encoder_forward(Tape& tape, const EncoderModel& model,
                             const Tensor& x, double input_rate,
                             const PlanSpec& plan) {
  const auto& cfg = model.config;
  int max_ds = 1;
  for (int f : cfg.stack_downsample) max_ds = std::max(max_ds, f);
  if (x.dim(0) < cfg.conv_embed_factor * max_ds)
    throw DataError("encoder: input too short for the downsampling ladder");

  Tensor h = conv_embed(tape, model, x);
  const int base_len = h.dim(0);
  const double base_rate = input_rate / cfg.conv_embed_factor;

  StackOutputs out;
  out.stacks.reserve(cfg.n_stacks());
  std::map<int, Tensor> last_at_factor;  // skip sources, keyed by factor
  int cur_factor = 1;

  for (int s = 0; s < cfg.n_stacks(); ++s) {
    int f = cfg.stack_downsample[s];
    if (f > cur_factor) {
      h = tape.avg_downsample(h, f / cur_factor);
    } else if (f < cur_factor) {
      h = tape.nearest_upsample(h, cur_factor / f);
      int want = len_at_factor(base_len, f);
      if (h.dim(0) > want) h = tape.slice(h, 0, want);
      auto skip = last_at_factor.find(f);
      if (skip != last_at_factor.end()) h = tape.add(h, skip->second);
    }
    cur_factor = f;
    if (s > 0 && cfg.width(s) != cfg.width(s - 1))
      h = tape.matmul(h, model.p("trans" + std::to_string(s) + ".w"));

    int T_s = h.dim(0);
    std::vector<int> pos_ids(T_s);
    for (int t = 0; t < T_s; ++t)
      pos_ids[t] = std::min(t, cfg.max_positions - 1);
    h = tape.add(h, tape.embedding_lookup(model.p(stk(s) + ".pos"), pos_ids));

    AttentionPlan stack_plan = plan.at_rate(T_s, base_rate / f);
    Tensor bias = plan_bias(stack_plan);
    for (int i = 0; i < cfg.n_blocks_per_stack; ++i)
      h = attention_block(tape, model,
                          stk(s) + ".blk" + std::to_string(i) + ".", h, bias,
                          cfg.n_heads);

    out.stacks.push_back(h);
    out.stack_rates.push_back(base_rate / f);
    last_at_factor[f] = h;
  }

  // Restore the base rate, then apply the output pooling stage.
  if (cur_factor > 1) {
    h = tape.nearest_upsample(h, cur_factor);
    if (h.dim(0) > base_len) h = tape.slice(h, 0, base_len);
    auto skip = last_at_factor.find(1);
    if (skip != last_at_factor.end()) h = tape.add(h, skip->second);
  }
  if (cfg.output_downsample_factor > 1)
    h = tape.avg_downsample(h, cfg.output_downsample_factor);
  h = tape.layer_norm(h, model.p("out.ln.g"), model.p("out.ln.b"));
  out.final = linear(tape, h, model.p("out.w"), model.p("out.b"));
  out.output_frame_rate = base_rate / cfg.output_downsample_factor;
  return out;
}

FeatureMatrix extract_features(const EncoderModel& model,
                               const FeatureMatrix& fbank_cmvn, int selector) {
  if (fbank_cmvn.kind != FeatureKind::fbank)
    throw DataError("extract_features: input must be fbank features");
  if (selector != static_cast<int>(FeatureSelector::final_output) &&
      (selector < 0 || selector >= model.config.n_stacks()))
    throw ConfigError("extract_features: invalid stack selector");

  Tape tape(false);
  Tensor x = ad::make_leaf({fbank_cmvn.frames(), fbank_cmvn.dim()},
                           std::vector<double>(fbank_cmvn.m.v), false);
  StackOutputs out =
      encoder_forward(tape, model, x, fbank_cmvn.frame_rate, PlanSpec{});

  const Tensor& src =
      selector == static_cast<int>(FeatureSelector::final_output)
          ? out.final
          : out.stacks[selector];
  FeatureMatrix f;
  f.kind = FeatureKind::latent;
  f.frame_rate = selector == static_cast<int>(FeatureSelector::final_output)
                     ? out.output_frame_rate
                     : out.stack_rates[selector];
  f.m.rows = src.dim(0);
  f.m.cols = src.dim(1);
  f.m.v = src.values();
  return f;
}

}  // namespace sslasr
