// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_ENCODER_HPP
#define SSLASR_ENCODER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sslasr/features.hpp"
#include "sslasr/tensor.hpp"

namespace sslasr {

/// U-Net encoder over log-mel input: a strided Conv-Embed front-end, then
/// stacks of pre-norm attention + swish feed-forward blocks, each stack
/// running at base_rate / stack_downsample[s]. Between stacks the sequence
/// is average-pooled down or nearest-copy upsampled, with additive skip
/// connections from the most recent same-rate stack output. A final
/// average-pool stage reduces the output rate once more.
struct EncoderConfig {
  std::vector<int> d_model = {96};  // one entry broadcasts to all stacks
  int n_heads = 4;
  int ff_multiplier = 4;
  std::vector<int> stack_downsample = {1, 2, 4, 8, 4, 2};
  int conv_embed_factor = 2;        // 1, 2 or 4
  int output_downsample_factor = 2;
  int n_blocks_per_stack = 2;
  bool causal = false;              // left-only conv padding
  int n_mels = 80;
  int max_positions = 2048;         // learned absolute positions per stack

  int n_stacks() const { return static_cast<int>(stack_downsample.size()); }
  int width(int stack) const {
    return d_model.size() == 1 ? d_model[0] : d_model[stack];
  }
  int output_dim() const { return width(n_stacks() - 1); }
  void validate() const;
};

struct EncoderModel {
  EncoderConfig config;
  std::vector<std::pair<std::string, ad::Tensor>> params;  // ordered
  std::unordered_map<std::string, size_t> index;

  const ad::Tensor& p(const std::string& name) const;
  std::vector<ad::Tensor> parameters() const;
  void rebuild_index();
};

/// Deterministic initialization: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
/// weights in a fixed parameter order, zero biases, unit layer-norm gains.
EncoderModel init_encoder(const EncoderConfig& cfg, uint64_t seed);

/// Number of parameter scalars init_encoder will create, by construction
/// (conv stages + per-stack position table, transitions and blocks + the
/// output projection); tests compare it against the allocated total.
int64_t parameter_count(const EncoderConfig& cfg);

/// Per-position allowed key range [lo_t, hi_t], inclusive.
struct AttentionPlan {
  int length = 0;
  std::vector<int> lo, hi;
};

/// Position t attends to [max(0, chunk_start - left_context), chunk_end-1]
/// with chunk_start = floor(t / chunk) * chunk. chunk_frames >= length (or
/// the kFullContext sentinel) gives full context.
inline constexpr int kFullContext = 1 << 28;
AttentionPlan chunked_attention_plan(int length, int chunk_frames,
                                     int left_context_frames);

/// Rate-independent plan description in seconds; nullopt means unlimited.
struct PlanSpec {
  std::optional<double> chunk_s;
  std::optional<double> left_context_s;

  bool full_context() const { return !chunk_s.has_value(); }
  /// Materializes the plan at a frame rate. Chunk and context must land on
  /// whole frames at this rate.
  AttentionPlan at_rate(int length, double rate) const;
};

struct StackOutputs {
  std::vector<ad::Tensor> stacks;  // per-stack hidden sequence, stack rate
  std::vector<double> stack_rates;
  ad::Tensor final;                // T_out x output_dim
  double output_frame_rate = 0.0;
};

/// Runs the encoder. x is T x n_mels at input_rate (normalized fbank,
/// possibly masked). The plan applies to every attention block at that
/// block's own rate.
StackOutputs encoder_forward(ad::Tape& tape, const EncoderModel& model,
                             const ad::Tensor& x, double input_rate,
                             const PlanSpec& plan);

/// Conv-Embed front-end only (exposed for shape and causality tests).
ad::Tensor conv_embed(ad::Tape& tape, const EncoderModel& model,
                      const ad::Tensor& x);

enum class FeatureSelector : int { final_output = -1 };

/// Deterministic full-context feature extraction, no masking. selector is
/// FeatureSelector::final_output or a stack index (0-based).
FeatureMatrix extract_features(const EncoderModel& model,
                               const FeatureMatrix& fbank_cmvn, int selector);

}  // namespace sslasr

#endif  // SSLASR_ENCODER_HPP
