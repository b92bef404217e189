// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/pretrain.hpp"

#include <algorithm>
#include <cmath>

#include "sslasr/common.hpp"

namespace sslasr {

using ad::Tape;
using ad::Tensor;

void MaskConfig::validate() const {
  if (span_frames < 1) throw ConfigError("mask: span_frames must be >= 1");
  if (start_prob < 0.0 || start_prob > 1.0)
    throw ConfigError("mask: start_prob must be in [0, 1]");
}

std::vector<uint8_t> sample_mask(int T, const MaskConfig& cfg,
                                 std::mt19937_64& rng) {
  cfg.validate();
  if (T < 1) throw DataError("mask: T must be >= 1");
  std::vector<uint8_t> mask(T, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 0; t < T; ++t) {
    if (unif(rng) < cfg.start_prob) {
      int end = std::min(T, t + cfg.span_frames);
      std::fill(mask.begin() + t, mask.begin() + end, uint8_t{1});
    }
  }
  return mask;
}

Tensor apply_mask(Tape& tape, const Tensor& x, std::span<const uint8_t> mask,
                  const Tensor& mask_embedding) {
  int T = x.dim(0), D = x.dim(1);
  if (static_cast<int>(mask.size()) != T)
    throw DimError("apply_mask: mask length must equal frame count");
  if (mask_embedding.numel() != D)
    throw DimError("apply_mask: embedding dim must equal feature dim");

  // x * keep + mask_col * embedding_row; both factors are constants, so
  // gradients flow to x on kept frames and to the embedding on masked ones.
  std::vector<double> keep(static_cast<size_t>(T) * D, 1.0);
  std::vector<double> col(T, 0.0);
  for (int t = 0; t < T; ++t) {
    if (mask[t]) {
      col[t] = 1.0;
      std::fill_n(keep.begin() + static_cast<size_t>(t) * D, D, 0.0);
    }
  }
  Tensor keep_m = ad::make_leaf({T, D}, std::move(keep), false);
  Tensor mask_col = ad::make_leaf({T, 1}, std::move(col), false);
  return tape.add(tape.mul(x, keep_m),
                  tape.matmul(mask_col, mask_embedding));
}

namespace {

void check_integer_ratio(double a, double b, const char* what) {
  double hi = std::max(a, b), lo = std::min(a, b);
  if (lo <= 0) throw ConfigError(std::string(what) + ": non-positive rate");
  double ratio = hi / lo;
  if (std::fabs(ratio - std::round(ratio)) > 1e-9)
    throw ConfigError(std::string(what) + ": rates are not integer multiples");
}

}  // namespace

AlignedTargets reduce_mask_and_labels(std::span<const uint8_t> input_mask,
                                      double input_rate,
                                      std::span<const int> labels,
                                      double label_rate, double output_rate,
                                      int output_len) {
  check_integer_ratio(input_rate, output_rate, "reduce_mask_and_labels(mask)");
  check_integer_ratio(label_rate, output_rate, "reduce_mask_and_labels(labels)");
  if (input_mask.empty() || labels.empty())
    throw DataError("reduce_mask_and_labels: empty mask or labels");

  AlignedTargets out;
  out.mask.resize(output_len);
  for (int j = 0; j < output_len; ++j) {
    auto lo = static_cast<int64_t>(std::floor(j * input_rate / output_rate + 1e-9));
    auto hi = static_cast<int64_t>(
        std::floor((j + 1) * input_rate / output_rate + 1e-9));
    lo = std::clamp<int64_t>(lo, 0, static_cast<int64_t>(input_mask.size()) - 1);
    hi = std::clamp<int64_t>(hi, lo + 1, static_cast<int64_t>(input_mask.size()));
    int64_t covered = hi - lo, masked = 0;
    for (int64_t t = lo; t < hi; ++t) masked += input_mask[t] ? 1 : 0;
    out.mask[j] = (2 * masked >= covered) ? 1 : 0;
  }
  std::vector<int> label_vec(labels.begin(), labels.end());
  out.labels = pool_labels(label_vec, label_rate, output_rate, output_len);
  return out;
}

PretrainModel init_pretrain_model(int n_classes, int encoder_dim, int n_mels,
                                  double tau, uint64_t seed) {
  if (n_classes < 2) throw ConfigError("pretrain: need at least 2 classes");
  if (tau <= 0) throw ConfigError("pretrain: tau must be positive");
  std::mt19937_64 rng(derive_seed(seed, "pretrain"));
  double bound = 1.0 / std::sqrt(static_cast<double>(encoder_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> a(static_cast<size_t>(n_classes) * encoder_dim);
  for (auto& v : a) v = dist(rng);

  PretrainModel model;
  model.head.A = ad::make_leaf({n_classes, encoder_dim}, std::move(a), true);
  model.head.tau = tau;
  model.mask_embedding = ad::make_zeros({1, n_mels}, true);
  return model;
}

Tensor pretrain_loss(Tape& tape, const Tensor& encoder_out,
                     const PretrainHead& head,
                     std::span<const uint8_t> output_mask,
                     std::span<const int> labels) {
  int T = encoder_out.dim(0);
  if (static_cast<int>(output_mask.size()) != T ||
      static_cast<int>(labels.size()) != T)
    throw DimError("pretrain_loss: mask/labels length must equal output frames");
  if (head.tau <= 0) throw ConfigError("pretrain_loss: tau must be positive");

  std::vector<int> masked_labels;
  for (int t = 0; t < T; ++t)
    if (output_mask[t]) masked_labels.push_back(labels[t]);
  if (masked_labels.empty())
    throw DataError("pretrain_loss: batch has no masked frames");

  Tensor z = tape.scalar_mul(tape.matmul(encoder_out, head.A, true),
                             1.0 / head.tau);
  Tensor z_masked = tape.masked_select(z, output_mask);
  return tape.cross_entropy(z_masked, masked_labels);
}

double masked_accuracy(const Tensor& encoder_out, const PretrainHead& head,
                       std::span<const uint8_t> output_mask,
                       std::span<const int> labels) {
  int T = encoder_out.dim(0);
  int d = encoder_out.dim(1);
  int C = head.n_classes();
  int64_t hit = 0, total = 0;
  for (int t = 0; t < T; ++t) {
    if (!output_mask[t]) continue;
    const double* o = encoder_out.values().data() + static_cast<size_t>(t) * d;
    int best = 0;
    double best_z = -1e300;
    for (int c = 0; c < C; ++c) {
      const double* a = head.A.values().data() + static_cast<size_t>(c) * d;
      double z = 0;
      for (int i = 0; i < d; ++i) z += a[i] * o[i];
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    if (best == labels[t]) ++hit;
    ++total;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / total;
}

}  // namespace sslasr
