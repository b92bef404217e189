// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_PIPELINE_HPP
#define SSLASR_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sslasr/config.hpp"
#include "sslasr/corpus.hpp"
#include "sslasr/encoder.hpp"
#include "sslasr/features.hpp"
#include "sslasr/pretrain.hpp"
#include "sslasr/trainer.hpp"
#include "sslasr/transducer.hpp"

namespace sslasr {

struct IterationPlan {
  int pretrain_epochs = 2;
  int finetune_epochs = 4;
};

/// Everything a pipeline run needs; parsed from a key=value config with
/// CLI overrides (see options_from_config for the key names).
struct PipelineOptions {
  std::string workdir;
  std::string pretrain_manifest;
  std::string finetune_manifest;
  std::vector<std::pair<std::string, std::string>> test_manifests;  // name, path
  std::string alignments;  // optional reference units for codebook metrics
  uint64_t seed = 1;

  FeatureConfig features;
  EncoderConfig encoder;
  PredictorConfig predictor;
  JoinerConfig joiner;
  int vocab_size = 32;

  MaskConfig mask;
  double tau = 0.1;
  int kmeans_k = 24;
  int kmeans_iters = 25;
  int64_t kmeans_max_frames = 2000000;

  /// Label source for the first iteration: "asr" clusters the seed ASR
  /// encoder's output; "fbank"/"mfcc" cluster spectral features. Later
  /// iterations cluster the previous fine-tuned encoder ("asr") or the
  /// previous pre-trained encoder's spectral_stack hidden state.
  std::string codebook_source = "asr";
  int asr_selector = static_cast<int>(FeatureSelector::final_output);
  int spectral_stack = 2;

  std::vector<IterationPlan> iterations{{2, 4}, {2, 4}};
  int stage1_epochs = 4;
  double pretrain_lr = 4e-3;
  double finetune_lr = 3e-3;
  int warmup_steps = 60;
  int batch_frames = 4000;
  double grad_clip = 5.0;
  bool fresh_encoder_each_iteration = true;

  int beam = 4;
  int max_symbols_per_frame = 5;
  bool verbose = false;

  // streaming variant
  double decode_chunk_s = 0.64;
  double decode_context_s = 5.12;

  void validate() const;
};

PipelineOptions options_from_config(const KvConfig& cfg);

/// Four-stage orchestrator:
///   stage 1  seed ASR on the labeled split (also the from-scratch baseline)
///   stage 2  codebook + label extraction over the unlabeled split
///   stage 3  masked-prediction pre-training
///   stage 4  transducer fine-tuning from the pre-trained encoder
/// Iteration i >= 2 re-enters at stage 2 with the previous iteration's
/// fine-tuned encoder as the label source. One instance per workdir;
/// completed stages are skipped on re-run when their artifact checksums
/// match the state file.
class Pipeline {
 public:
  explicit Pipeline(PipelineOptions opts);

  /// Runs stage 1 and n iterations of stages 2..4; returns the report.
  nlohmann::json run(int n_iterations);

  /// Causal variant. Pre-trains with labels from label_store_path (or
  /// skips pre-training when empty: the from-scratch streaming baseline),
  /// then fine-tunes and decodes with the fixed decode-time plan.
  /// Requires encoder.causal = true.
  nlohmann::json run_streaming(const std::string& label_store_path,
                               const std::string& tag);

  const PipelineOptions& options() const { return opts_; }
  std::string stage_dir(const std::string& tag) const;

 private:
  struct StageRef {
    std::string tag;
    std::string path;
  };

  void load_state();
  void save_state();
  bool stage_done(const std::string& tag, const std::string& path) const;
  void mark_done(const std::string& tag, const std::string& path,
                 const nlohmann::json& inputs);

  BpeModel ensure_bpe();
  std::string stage1();
  std::string stage2(int iteration, const std::string& source_ckpt,
                     bool source_is_pretrained);
  std::string stage3(int iteration, const std::string& label_path,
                     bool causal_streaming, const std::string& tag_prefix);
  std::string stage4(int iteration, const std::string& stage3_ckpt,
                     bool causal_streaming, const std::string& tag_prefix);
  nlohmann::json evaluate(const TransducerModel& model, const PlanSpec& plan,
                          const std::string& hyp_dir);

  PipelineOptions opts_;
  nlohmann::json state_;
  std::string state_path_;
};

}  // namespace sslasr

#endif  // SSLASR_PIPELINE_HPP
