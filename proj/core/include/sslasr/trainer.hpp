// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_TRAINER_HPP
#define SSLASR_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sslasr/bpe.hpp"
#include "sslasr/codebook.hpp"
#include "sslasr/corpus.hpp"
#include "sslasr/encoder.hpp"
#include "sslasr/features.hpp"
#include "sslasr/optim.hpp"
#include "sslasr/pretrain.hpp"
#include "sslasr/transducer.hpp"

namespace sslasr {

struct TrainConfig {
  int epochs = 1;
  double lr = 2e-3;
  int warmup_steps = 100;
  double grad_clip = 5.0;
  int batch_frames = 4000;  // fbank frames per batch
  uint64_t seed = 0;
  bool verbose = false;
};

/// Normalized fbank features per utterance, loaded once per run.
class FeatureSet {
 public:
  static FeatureSet build(const Manifest& manifest, const FeatureConfig& cfg);
  static FeatureSet from_map(std::map<std::string, FeatureMatrix> feats);
  const FeatureMatrix& at(const std::string& id) const;
  bool has(const std::string& id) const { return feats_.count(id) > 0; }
  size_t size() const { return feats_.size(); }

 private:
  std::map<std::string, FeatureMatrix> feats_;
};

/// Uniform per-batch (chunk, left context) draw for causal training; each
/// grid includes the full-context sentinel.
struct StreamingSampler {
  std::vector<std::optional<double>> chunk_choices;
  std::vector<std::optional<double>> context_choices;

  static StreamingSampler standard_grid();
  PlanSpec sample(std::mt19937_64& rng) const;
};

struct EpochMetrics {
  double loss = 0.0;          // mean objective over the epoch
  double masked_accuracy = 0.0;  // pretraining only
  int64_t steps = 0;
  int skipped_utterances = 0;
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;
  std::vector<double> step_losses;
};

/// One or more masked-prediction epochs over the unlabeled manifest.
/// Deterministic given cfg.seed; on_epoch_end fires after every epoch
/// (checkpointing hook).
RunMetrics pretrain_run(
    EncoderModel* encoder, PretrainModel* head, const Manifest& manifest,
    const FeatureSet& feats, const LabelStore& labels,
    const MaskConfig& mask_cfg, const TrainConfig& cfg,
    const StreamingSampler* streaming = nullptr,
    const std::function<void(int)>& on_epoch_end = nullptr);

/// Transducer training on a labeled manifest (joint encoder + predictor +
/// joiner). The objective is the lattice loss normalized by target length.
RunMetrics finetune_run(TransducerModel* model, const Manifest& manifest,
                        const FeatureSet& feats, const BpeModel& bpe,
                        const TrainConfig& cfg,
                        const StreamingSampler* streaming = nullptr,
                        const std::function<void(int)>& on_epoch_end = nullptr);

/// Decodes every utterance; returns id -> text (and id -> score).
std::map<std::string, std::string> decode_corpus(
    const TransducerModel& model, const Manifest& manifest,
    const FeatureSet& feats, const BpeModel& bpe, const PlanSpec& plan,
    int beam, int max_symbols_per_frame = 5,
    std::map<std::string, double>* scores = nullptr);

// --- model serialization --------------------------------------------------

void save_encoder_checkpoint(const EncoderModel& encoder,
                             const PretrainModel* pretrain,
                             const std::string& path);
EncoderModel load_encoder_checkpoint(const std::string& path,
                                     PretrainModel* pretrain = nullptr);

void save_transducer_checkpoint(const TransducerModel& model,
                                const std::string& path);
TransducerModel load_transducer_checkpoint(const std::string& path);

}  // namespace sslasr

#endif  // SSLASR_TRAINER_HPP
