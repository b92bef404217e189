// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_TRANSDUCER_HPP
#define SSLASR_TRANSDUCER_HPP

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sslasr/encoder.hpp"
#include "sslasr/features.hpp"
#include "sslasr/tensor.hpp"

namespace sslasr {

inline constexpr int kBlank = 0;

struct PredictorConfig {
  int context_size = 2;
  int embed_dim = 64;
  int hidden = 512;  // scaled down for desk-size runs

  void validate() const;
};

struct JoinerConfig {
  int hidden = 512;

  void validate() const;
};

/// Encoder + stateless predictor + joiner. n_out is the joiner output
/// dimension: all label ids plus the blank at id 0.
struct TransducerModel {
  EncoderModel encoder;
  PredictorConfig pred_cfg;
  JoinerConfig join_cfg;
  int n_out = 0;
  std::vector<std::pair<std::string, ad::Tensor>> params;  // non-encoder
  std::unordered_map<std::string, size_t> index;

  const ad::Tensor& p(const std::string& name) const;
  std::vector<ad::Tensor> parameters() const;  // encoder + head params
  void rebuild_index();
};

TransducerModel init_transducer(const EncoderModel& encoder,
                                const PredictorConfig& pred,
                                const JoinerConfig& join, int n_out,
                                uint64_t seed);

/// Predictor states for all label prefixes of y: row u is g_u, a pure
/// function of the last context_size labels emitted before position u
/// (left-padded with blank). Shape (U+1) x hidden.
ad::Tensor predictor_states(ad::Tape& tape, const TransducerModel& model,
                            std::span<const int> y);

/// Single-window predictor output; history is the last context_size
/// emitted labels, oldest first, blank-padded.
std::vector<double> predictor_forward(const TransducerModel& model,
                                      std::span<const int> history);

/// Joiner logits for one (encoder frame, predictor state) pair.
std::vector<double> joiner(const TransducerModel& model,
                           std::span<const double> enc_frame,
                           std::span<const double> pred_state);

/// Full lattice of log-probabilities: row u*T + t holds the log-softmax
/// joiner output for (t, u). Shape ((U+1)*T) x n_out.
ad::Tensor build_lattice(ad::Tape& tape, const TransducerModel& model,
                         const ad::Tensor& enc_out, std::span<const int> y);

/// -log P(y | x) by the forward DP over blank/emit transitions; the
/// backward rule uses the alpha-beta recursion. Requires every lattice row
/// to be a valid log-softmax slice (logsumexp == 0 within 1e-5).
ad::Tensor transducer_loss(ad::Tape& tape, const ad::Tensor& lattice,
                           std::span<const int> y, int T);

struct BruteForceResult {
  double neg_log_p = 0.0;
  uint64_t n_paths = 0;
};

/// Exhaustive alignment enumeration (test oracle). Refuses instances with
/// more than max_paths alignments.
BruteForceResult brute_force_transducer(const std::vector<double>& lattice,
                                        int T, int n_out,
                                        std::span<const int> y,
                                        uint64_t max_paths = 100000);

struct Hypothesis {
  std::vector<int> tokens;
  double score = 0.0;  // log-probability (merged over alignments in beam)
};

/// Frame-synchronous argmax decoding with a per-frame emission cap.
std::vector<int> greedy_decode_enc(const TransducerModel& model,
                                   const Matrix& enc_out,
                                   int max_symbols_per_frame = 5);

/// Frame-synchronous beam search with per-frame emission cap and prefix
/// merging by log-sum-exp. beam = 1 reproduces greedy_decode exactly.
Hypothesis beam_decode_enc(const TransducerModel& model, const Matrix& enc_out,
                           int beam = 4, int max_symbols_per_frame = 5);

/// Runs the encoder (no gradients) under plan and decodes.
std::vector<int> greedy_decode(const TransducerModel& model,
                               const FeatureMatrix& fbank_cmvn,
                               const PlanSpec& plan,
                               int max_symbols_per_frame = 5);
Hypothesis beam_decode(const TransducerModel& model,
                       const FeatureMatrix& fbank_cmvn, const PlanSpec& plan,
                       int beam = 4, int max_symbols_per_frame = 5);

/// Encoder output values for decoding (no gradients).
Matrix encode_for_decoding(const TransducerModel& model,
                           const FeatureMatrix& fbank_cmvn,
                           const PlanSpec& plan);

}  // namespace sslasr

#endif  // SSLASR_TRANSDUCER_HPP
