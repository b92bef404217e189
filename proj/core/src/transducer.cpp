// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/transducer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "sslasr/common.hpp"

namespace sslasr {

using ad::Tape;
using ad::Tensor;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

void PredictorConfig::validate() const {
  if (context_size < 1) throw ConfigError("predictor: context_size must be >= 1");
  if (embed_dim < 1 || hidden < 1)
    throw ConfigError("predictor: bad embed_dim/hidden");
}

void JoinerConfig::validate() const {
  if (hidden < 1) throw ConfigError("joiner: bad hidden size");
}

const Tensor& TransducerModel::p(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end())
    throw DataError("transducer: unknown parameter " + name);
  return params[it->second].second;
}

std::vector<Tensor> TransducerModel::parameters() const {
  std::vector<Tensor> out = encoder.parameters();
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

void TransducerModel::rebuild_index() {
  index.clear();
  for (size_t i = 0; i < params.size(); ++i) index[params[i].first] = i;
}

TransducerModel init_transducer(const EncoderModel& encoder,
                                const PredictorConfig& pred,
                                const JoinerConfig& join, int n_out,
                                uint64_t seed) {
  pred.validate();
  join.validate();
  if (n_out < 2) throw ConfigError("transducer: n_out must be >= 2");

  TransducerModel model;
  model.encoder = encoder;
  model.pred_cfg = pred;
  model.join_cfg = join;
  model.n_out = n_out;

  std::mt19937_64 rng(derive_seed(seed, "transducer"));
  auto uniform = [&](const std::string& name, std::vector<int> shape,
                     double bound) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    std::vector<double> v(n);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : v) x = dist(rng);
    model.params.emplace_back(name,
                              ad::make_leaf(std::move(shape), std::move(v), true));
  };
  auto zeros = [&](const std::string& name, std::vector<int> shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    model.params.emplace_back(
        name, ad::make_leaf(std::move(shape), std::vector<double>(n, 0.0), true));
  };

  int E = pred.embed_dim, H = pred.hidden, J = join.hidden;
  int d_enc = encoder.config.output_dim();
  uniform("pred.emb", {n_out, E}, 1.0 / std::sqrt(static_cast<double>(E)));
  uniform("pred.w", {pred.context_size * E, H},
          1.0 / std::sqrt(static_cast<double>(pred.context_size * E)));
  zeros("pred.b", {1, H});
  uniform("join.enc_w", {d_enc, J}, 1.0 / std::sqrt(static_cast<double>(d_enc)));
  uniform("join.pred_w", {H, J}, 1.0 / std::sqrt(static_cast<double>(H)));
  zeros("join.b", {1, J});
  uniform("join.out_w", {J, n_out}, 1.0 / std::sqrt(static_cast<double>(J)));
  zeros("join.out_b", {1, n_out});
  model.rebuild_index();
  return model;
}

Tensor predictor_states(Tape& tape, const TransducerModel& model,
                        std::span<const int> y) {
  int U = static_cast<int>(y.size());
  int ctx = model.pred_cfg.context_size;
  for (int id : y)
    if (id <= kBlank || id >= model.n_out)
      throw DataError("predictor: label out of range");

  Tensor window;
  for (int c = 0; c < ctx; ++c) {
    // slot c holds y[u - ctx + c], blank-padded on the left
    std::vector<int> ids(U + 1);
    for (int u = 0; u <= U; ++u) {
      int src = u - ctx + c;
      ids[u] = src >= 0 ? y[src] : kBlank;
    }
    Tensor emb = tape.embedding_lookup(model.p("pred.emb"), ids);
    window = c == 0 ? emb : tape.concat(window, emb, 1);
  }
  Tensor g = tape.add(tape.matmul(window, model.p("pred.w")), model.p("pred.b"));
  return tape.swish(g);
}

std::vector<double> predictor_forward(const TransducerModel& model,
                                      std::span<const int> history) {
  int ctx = model.pred_cfg.context_size;
  if (static_cast<int>(history.size()) != ctx)
    throw DimError("predictor_forward: history must have context_size entries");
  int E = model.pred_cfg.embed_dim, H = model.pred_cfg.hidden;
  const auto& emb = model.p("pred.emb").values();
  const auto& w = model.p("pred.w").values();
  const auto& b = model.p("pred.b").values();

  std::vector<double> g(H);
  for (int h = 0; h < H; ++h) {
    double acc = b[h];
    for (int c = 0; c < ctx; ++c) {
      int id = history[c];
      if (id < 0 || id >= model.n_out)
        throw DataError("predictor_forward: label out of range");
      const double* e = emb.data() + static_cast<size_t>(id) * E;
      const double* wc = w.data() + static_cast<size_t>(c) * E * H;
      for (int i = 0; i < E; ++i) acc += e[i] * wc[static_cast<size_t>(i) * H + h];
    }
    g[h] = acc * sigmoid(acc);
  }
  return g;
}

std::vector<double> joiner(const TransducerModel& model,
                           std::span<const double> enc_frame,
                           std::span<const double> pred_state) {
  int d = model.encoder.config.output_dim();
  int H = model.pred_cfg.hidden, J = model.join_cfg.hidden;
  if (static_cast<int>(enc_frame.size()) != d ||
      static_cast<int>(pred_state.size()) != H)
    throw DimError("joiner: input sizes disagree with the model");
  const auto& we = model.p("join.enc_w").values();
  const auto& wp = model.p("join.pred_w").values();
  const auto& bj = model.p("join.b").values();
  const auto& wo = model.p("join.out_w").values();
  const auto& bo = model.p("join.out_b").values();

  std::vector<double> hidden(J);
  for (int j = 0; j < J; ++j) {
    double acc = bj[j];
    for (int i = 0; i < d; ++i) acc += enc_frame[i] * we[static_cast<size_t>(i) * J + j];
    for (int i = 0; i < H; ++i) acc += pred_state[i] * wp[static_cast<size_t>(i) * J + j];
    hidden[j] = acc * sigmoid(acc);
  }
  std::vector<double> logits(model.n_out);
  for (int v = 0; v < model.n_out; ++v) {
    double acc = bo[v];
    for (int j = 0; j < J; ++j)
      acc += hidden[j] * wo[static_cast<size_t>(j) * model.n_out + v];
    logits[v] = acc;
  }
  return logits;
}

Tensor build_lattice(Tape& tape, const TransducerModel& model,
                     const Tensor& enc_out, std::span<const int> y) {
  int T = enc_out.dim(0);
  int U = static_cast<int>(y.size());

  Tensor enc_lin = tape.matmul(enc_out, model.p("join.enc_w"));
  Tensor g = predictor_states(tape, model, y);             // (U+1) x H
  Tensor pred_lin = tape.matmul(g, model.p("join.pred_w"));  // (U+1) x J

  Tensor lattice;
  for (int u = 0; u <= U; ++u) {
    Tensor row = tape.add(enc_lin, tape.slice(pred_lin, u, u + 1));
    row = tape.swish(tape.add(row, model.p("join.b")));
    row = tape.add(tape.matmul(row, model.p("join.out_w")),
                   model.p("join.out_b"));
    row = tape.log_softmax(row);  // T x n_out
    lattice = u == 0 ? row : tape.concat(lattice, row, 0);
  }
  (void)T;
  return lattice;
}

namespace {

struct LatticeView {
  const double* lp;
  int T, n_out;
  std::span<const int> y;

  double blank(int t, int u) const {
    return lp[(static_cast<size_t>(u) * T + t) * n_out + kBlank];
  }
  double emit(int t, int u) const {
    return lp[(static_cast<size_t>(u) * T + t) * n_out + y[u]];
  }
};

void validate_lattice(const std::vector<double>& lp, int T, int U, int n_out,
                      std::span<const int> y) {
  if (T < 1) throw DataError("transducer_loss: need T >= 1");
  if (static_cast<size_t>(T) * (U + 1) * n_out != lp.size())
    throw DimError("transducer_loss: lattice shape does not match T, U, n_out");
  for (int id : y)
    if (id <= kBlank || id >= n_out)
      throw DataError("transducer_loss: label out of range");
  for (int r = 0; r < T * (U + 1); ++r) {
    const double* row = lp.data() + static_cast<size_t>(r) * n_out;
    double m = row[0];
    for (int v = 1; v < n_out; ++v) m = std::max(m, row[v]);
    double s = 0;
    for (int v = 0; v < n_out; ++v) s += std::exp(row[v] - m);
    if (std::fabs(m + std::log(s)) > 1e-5)
      throw DataError("transducer_loss: lattice rows must be log-softmax slices");
  }
}

}  // namespace

Tensor transducer_loss(Tape& tape, const Tensor& lattice,
                       std::span<const int> y, int T) {
  const int U = static_cast<int>(y.size());
  const int n_out = lattice.dim(1);
  validate_lattice(lattice.values(), T, U, n_out, y);
  LatticeView view{lattice.values().data(), T, n_out, y};

  // forward variables: alpha(t, u) = log P(reaching (t, u))
  std::vector<double> alpha(static_cast<size_t>(T) * (U + 1), kNegInf);
  auto A = [&](int t, int u) -> double& {
    return alpha[static_cast<size_t>(u) * T + t];
  };
  A(0, 0) = 0.0;
  for (int u = 0; u <= U; ++u) {
    for (int t = 0; t < T; ++t) {
      if (t == 0 && u == 0) continue;
      double v = kNegInf;
      if (t > 0) v = log_add(v, A(t - 1, u) + view.blank(t - 1, u));
      if (u > 0) v = log_add(v, A(t, u - 1) + view.emit(t, u - 1));
      A(t, u) = v;
    }
  }
  double log_p = A(T - 1, U) + view.blank(T - 1, U);
  if (!std::isfinite(log_p))
    throw DataError("transducer_loss: zero-probability lattice");

  auto ln = lattice.node();
  std::vector<int> y_copy(y.begin(), y.end());
  return tape.custom(
      {1}, {-log_p}, {lattice},
      [ln, y_copy, alpha = std::move(alpha), T, U, n_out, log_p](ad::Node& o) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        LatticeView view{ln->value.data(), T, n_out,
                         std::span<const int>(y_copy)};
        // beta(t, u) = log P(completing from (t, u)); beta over the virtual
        // (T, u) column is 0 at u == U and impossible otherwise.
        std::vector<double> beta(static_cast<size_t>(T) * (U + 1), kNegInf);
        auto B = [&](int t, int u) -> double& {
          return beta[static_cast<size_t>(u) * T + t];
        };
        for (int u = U; u >= 0; --u) {
          for (int t = T - 1; t >= 0; --t) {
            double via_blank =
                (t + 1 < T) ? B(t + 1, u) : (u == U ? 0.0 : kNegInf);
            double v = view.blank(t, u) + via_blank;
            if (u < U) v = log_add(v, view.emit(t, u) + B(t, u + 1));
            B(t, u) = v;
          }
        }
        auto Aat = [&](int t, int u) {
          return alpha[static_cast<size_t>(u) * T + t];
        };
        double g0 = o.grad[0];
        for (int u = 0; u <= U; ++u) {
          for (int t = 0; t < T; ++t) {
            size_t row = (static_cast<size_t>(u) * T + t) * n_out;
            double via_blank =
                (t + 1 < T) ? B(t + 1, u) : (u == U ? 0.0 : kNegInf);
            double occ_blank =
                Aat(t, u) + view.blank(t, u) + via_blank - log_p;
            if (occ_blank > -700)
              ln->grad[row + kBlank] -= g0 * std::exp(occ_blank);
            if (u < U) {
              double occ_emit =
                  Aat(t, u) + view.emit(t, u) + B(t, u + 1) - log_p;
              if (occ_emit > -700)
                ln->grad[row + y_copy[u]] -= g0 * std::exp(occ_emit);
            }
          }
        }
      });
}

BruteForceResult brute_force_transducer(const std::vector<double>& lattice,
                                        int T, int n_out,
                                        std::span<const int> y,
                                        uint64_t max_paths) {
  const int U = static_cast<int>(y.size());
  if (static_cast<size_t>(T) * (U + 1) * n_out != lattice.size())
    throw DimError("brute_force: lattice shape does not match T, U, n_out");
  // number of monotone paths to (T-1, U): C(T-1+U, U)
  double n_paths_f = 1.0;
  for (int i = 1; i <= U; ++i)
    n_paths_f = n_paths_f * (T - 1 + i) / i;
  if (n_paths_f > static_cast<double>(max_paths))
    throw DataError("brute_force: instance too large to enumerate");

  LatticeView view{lattice.data(), T, n_out, y};
  BruteForceResult result;
  double acc_logsum = kNegInf;

  // explicit stack of (t, u, score)
  struct Frame {
    int t, u;
    double score;
  };
  std::vector<Frame> stack{{0, 0, 0.0}};
  while (!stack.empty()) {
    auto [t, u, score] = stack.back();
    stack.pop_back();
    if (t == T - 1 && u == U) {
      acc_logsum = log_add(acc_logsum, score + view.blank(t, u));
      ++result.n_paths;
    }
    if (t + 1 < T) stack.push_back({t + 1, u, score + view.blank(t, u)});
    if (u < U) stack.push_back({t, u + 1, score + view.emit(t, u)});
  }
  result.neg_log_p = -acc_logsum;
  return result;
}

// ---------------------------------------------------------------------------
// decoding
// ---------------------------------------------------------------------------

namespace {

// Plain-array joiner pipeline for decoding: precomputed encoder
// projection plus cached predictor states per label window.
class DecodeRuntime {
 public:
  DecodeRuntime(const TransducerModel& model, const Matrix& enc_out)
      : model_(model), J_(model.join_cfg.hidden), n_out_(model.n_out) {
    int d = model.encoder.config.output_dim();
    if (enc_out.cols != d)
      throw DimError("decode: encoder output dim does not match model");
    T_ = enc_out.rows;
    const auto& we = model.p("join.enc_w").values();
    enc_lin_.assign(static_cast<size_t>(T_) * J_, 0.0);
    for (int t = 0; t < T_; ++t)
      for (int i = 0; i < d; ++i) {
        double e = enc_out.at(t, i);
        const double* w = we.data() + static_cast<size_t>(i) * J_;
        double* o = enc_lin_.data() + static_cast<size_t>(t) * J_;
        for (int j = 0; j < J_; ++j) o[j] += e * w[j];
      }
  }

  int frames() const { return T_; }
  int n_out() const { return n_out_; }

  // log-softmax joiner output at frame t given the emitted tokens
  std::vector<double> log_probs(int t, const std::vector<int>& tokens) {
    int ctx = model_.pred_cfg.context_size;
    std::vector<int> window(ctx, kBlank);
    for (int c = 0; c < ctx; ++c) {
      int src = static_cast<int>(tokens.size()) - ctx + c;
      if (src >= 0) window[c] = tokens[src];
    }
    auto it = pred_cache_.find(window);
    if (it == pred_cache_.end()) {
      const auto& wp = model_.p("join.pred_w").values();
      auto g = predictor_forward(model_, window);
      std::vector<double> lin(J_, 0.0);
      for (int i = 0; i < model_.pred_cfg.hidden; ++i) {
        const double* w = wp.data() + static_cast<size_t>(i) * J_;
        for (int j = 0; j < J_; ++j) lin[j] += g[i] * w[j];
      }
      it = pred_cache_.emplace(window, std::move(lin)).first;
    }
    const auto& bj = model_.p("join.b").values();
    const auto& wo = model_.p("join.out_w").values();
    const auto& bo = model_.p("join.out_b").values();
    const double* el = enc_lin_.data() + static_cast<size_t>(t) * J_;
    std::vector<double> logits(n_out_);
    for (int v = 0; v < n_out_; ++v) logits[v] = bo[v];
    for (int j = 0; j < J_; ++j) {
      double h = el[j] + it->second[j] + bj[j];
      h = h * sigmoid(h);
      const double* w = wo.data() + static_cast<size_t>(j) * n_out_;
      for (int v = 0; v < n_out_; ++v) logits[v] += h * w[v];
    }
    double m = logits[0];
    for (int v = 1; v < n_out_; ++v) m = std::max(m, logits[v]);
    double s = 0;
    for (int v = 0; v < n_out_; ++v) s += std::exp(logits[v] - m);
    double lse = m + std::log(s);
    for (int v = 0; v < n_out_; ++v) logits[v] -= lse;
    return logits;
  }

 private:
  const TransducerModel& model_;
  int T_ = 0, J_, n_out_;
  std::vector<double> enc_lin_;
  std::map<std::vector<int>, std::vector<double>> pred_cache_;
};

}  // namespace

std::vector<int> greedy_decode_enc(const TransducerModel& model,
                                   const Matrix& enc_out,
                                   int max_symbols_per_frame) {
  DecodeRuntime rt(model, enc_out);
  std::vector<int> tokens;
  for (int t = 0; t < rt.frames(); ++t) {
    for (int e = 0; e < max_symbols_per_frame; ++e) {
      auto lp = rt.log_probs(t, tokens);
      int best = 0;
      for (int v = 1; v < rt.n_out(); ++v)
        if (lp[v] > lp[best]) best = v;
      if (best == kBlank) break;
      tokens.push_back(best);
    }
  }
  return tokens;
}

Hypothesis beam_decode_enc(const TransducerModel& model, const Matrix& enc_out,
                           int beam, int max_symbols_per_frame) {
  if (beam < 1) throw ConfigError("beam_decode: beam must be >= 1");
  DecodeRuntime rt(model, enc_out);

  struct Hyp {
    std::vector<int> tokens;
    double score;
  };
  auto merge_into = [](std::vector<Hyp>* pool, Hyp h) {
    for (auto& other : *pool) {
      if (other.tokens == h.tokens) {
        other.score = log_add(other.score, h.score);
        return;
      }
    }
    pool->push_back(std::move(h));
  };
  // Order: higher score first; equal scores prefer the shorter (blank-
  // finished) hypothesis, then lexicographic tokens, so pruning is
  // deterministic and beam=1 follows the greedy argmax exactly.
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.tokens.size() != b.tokens.size())
      return a.tokens.size() < b.tokens.size();
    return a.tokens < b.tokens;
  };

  std::vector<Hyp> hyps{{{}, 0.0}};
  for (int t = 0; t < rt.frames(); ++t) {
    // Finished hypotheses took a blank at this frame; active ones are
    // still emitting. Each round prunes the combined pool to the beam,
    // so with beam=1 the search commits to the frame-local argmax, which
    // is exactly the greedy rule.
    std::vector<Hyp> done;
    std::vector<Hyp> active = std::move(hyps);
    for (int round = 0; round < max_symbols_per_frame && !active.empty();
         ++round) {
      std::vector<Hyp> stopped = std::move(done);
      std::vector<Hyp> emitted;
      for (const auto& h : active) {
        auto lp = rt.log_probs(t, h.tokens);
        merge_into(&stopped, {h.tokens, h.score + lp[kBlank]});
        for (int v = 1; v < rt.n_out(); ++v) {
          Hyp ext;
          ext.tokens = h.tokens;
          ext.tokens.push_back(v);
          ext.score = h.score + lp[v];
          merge_into(&emitted, std::move(ext));
        }
      }
      std::vector<std::pair<Hyp, bool>> pool;  // (hyp, is_stopped)
      pool.reserve(stopped.size() + emitted.size());
      for (auto& h : stopped) pool.emplace_back(std::move(h), true);
      for (auto& h : emitted) pool.emplace_back(std::move(h), false);
      std::sort(pool.begin(), pool.end(),
                [&](const auto& a, const auto& b) {
                  if (a.first.score != b.first.score ||
                      a.first.tokens.size() != b.first.tokens.size() ||
                      a.first.tokens != b.first.tokens)
                    return better(a.first, b.first);
                  return a.second && !b.second;  // stopped first
                });
      if (static_cast<int>(pool.size()) > beam) pool.resize(beam);
      done.clear();
      active.clear();
      for (auto& [h, is_stopped] : pool)
        (is_stopped ? done : active).push_back(std::move(h));
    }
    // Hypotheses still active at the cap consume the frame as they are.
    for (auto& h : active) merge_into(&done, std::move(h));
    std::sort(done.begin(), done.end(), better);
    if (static_cast<int>(done.size()) > beam) done.resize(beam);
    hyps = std::move(done);
  }
  std::sort(hyps.begin(), hyps.end(), better);
  return {hyps.front().tokens, hyps.front().score};
}

Matrix encode_for_decoding(const TransducerModel& model,
                           const FeatureMatrix& fbank_cmvn,
                           const PlanSpec& plan) {
  Tape tape(false);
  Tensor x = ad::make_leaf({fbank_cmvn.frames(), fbank_cmvn.dim()},
                           std::vector<double>(fbank_cmvn.m.v), false);
  StackOutputs out =
      encoder_forward(tape, model.encoder, x, fbank_cmvn.frame_rate, plan);
  Matrix enc(out.final.dim(0), out.final.dim(1));
  enc.v = out.final.values();
  return enc;
}

std::vector<int> greedy_decode(const TransducerModel& model,
                               const FeatureMatrix& fbank_cmvn,
                               const PlanSpec& plan,
                               int max_symbols_per_frame) {
  return greedy_decode_enc(model, encode_for_decoding(model, fbank_cmvn, plan),
                           max_symbols_per_frame);
}

Hypothesis beam_decode(const TransducerModel& model,
                       const FeatureMatrix& fbank_cmvn, const PlanSpec& plan,
                       int beam, int max_symbols_per_frame) {
  return beam_decode_enc(model, encode_for_decoding(model, fbank_cmvn, plan),
                         beam, max_symbols_per_frame);
}

}  // namespace sslasr
