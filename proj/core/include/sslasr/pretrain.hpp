// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_PRETRAIN_HPP
#define SSLASR_PRETRAIN_HPP

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sslasr/codebook.hpp"
#include "sslasr/tensor.hpp"

namespace sslasr {

struct MaskConfig {
  int span_frames = 10;
  double start_prob = 0.08;

  void validate() const;
};

/// Every frame is independently a span start with probability start_prob;
/// the mask is the union of [start, start + span) clipped to T.
std::vector<uint8_t> sample_mask(int T, const MaskConfig& cfg,
                                 std::mt19937_64& rng);

/// Replaces masked frames by the learned embedding row (1 x D); unmasked
/// frames pass through. Differentiable in x and mask_embedding.
ad::Tensor apply_mask(ad::Tape& tape, const ad::Tensor& x,
                      std::span<const uint8_t> mask,
                      const ad::Tensor& mask_embedding);

/// Input mask and labels live at their own frame rates; this aligns both
/// to the encoder output rate. An output frame is masked when at least
/// half of its covered input frames are; labels pool by majority vote
/// (ties -> lowest class id) and repeat when the label rate is lower than
/// the output rate.
struct AlignedTargets {
  std::vector<uint8_t> mask;
  std::vector<int> labels;
};
AlignedTargets reduce_mask_and_labels(std::span<const uint8_t> input_mask,
                                      double input_rate,
                                      std::span<const int> labels,
                                      double label_rate, double output_rate,
                                      int output_len);

/// Projection head: class logits are z_t = A o_t / tau.
struct PretrainHead {
  ad::Tensor A;  // C x d
  double tau = 0.1;

  int n_classes() const { return A.dim(0); }
};

/// Learned parameters of the masked-prediction stage: the projection head
/// plus the mask fill embedding (1 x n_mels).
struct PretrainModel {
  PretrainHead head;
  ad::Tensor mask_embedding;

  std::vector<ad::Tensor> parameters() const {
    return {head.A, mask_embedding};
  }
};

PretrainModel init_pretrain_model(int n_classes, int encoder_dim, int n_mels,
                                  double tau, uint64_t seed);

/// Mean cross-entropy over masked output frames of z = A o / tau.
/// Unmasked frames never contribute. Requires at least one masked frame.
ad::Tensor pretrain_loss(ad::Tape& tape, const ad::Tensor& encoder_out,
                         const PretrainHead& head,
                         std::span<const uint8_t> output_mask,
                         std::span<const int> labels);

/// Fraction of masked frames whose argmax logit equals the label
/// (evaluated on values only; no gradients).
double masked_accuracy(const ad::Tensor& encoder_out, const PretrainHead& head,
                       std::span<const uint8_t> output_mask,
                       std::span<const int> labels);

}  // namespace sslasr

#endif  // SSLASR_PRETRAIN_HPP
