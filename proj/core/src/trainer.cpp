// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "json.hpp"
#include "sslasr/audio.hpp"
#include "sslasr/checkpoint.hpp"
#include "sslasr/common.hpp"

namespace sslasr {

using ad::Tape;
using ad::Tensor;
using nlohmann::json;

FeatureSet FeatureSet::build(const Manifest& manifest,
                             const FeatureConfig& cfg) {
  FeatureSet set;
  for (const auto& u : manifest.utterances) {
    AudioBuffer buf = read_wav(u.audio_path);
    set.feats_[u.id] = cmvn(fbank(buf, cfg));
  }
  return set;
}

FeatureSet FeatureSet::from_map(std::map<std::string, FeatureMatrix> feats) {
  FeatureSet set;
  set.feats_ = std::move(feats);
  return set;
}

const FeatureMatrix& FeatureSet::at(const std::string& id) const {
  auto it = feats_.find(id);
  if (it == feats_.end()) throw DataError("features: no entry for id " + id);
  return it->second;
}

StreamingSampler StreamingSampler::standard_grid() {
  StreamingSampler s;
  s.chunk_choices = {0.32, 0.64, 1.28, std::nullopt};
  s.context_choices = {1.28, 2.56, 5.12, std::nullopt};
  return s;
}

PlanSpec StreamingSampler::sample(std::mt19937_64& rng) const {
  if (chunk_choices.empty() || context_choices.empty())
    throw ConfigError("streaming: empty chunk/context grids");
  std::uniform_int_distribution<size_t> ci(0, chunk_choices.size() - 1);
  std::uniform_int_distribution<size_t> xi(0, context_choices.size() - 1);
  PlanSpec plan;
  plan.chunk_s = chunk_choices[ci(rng)];
  plan.left_context_s = context_choices[xi(rng)];
  if (plan.full_context()) plan.left_context_s.reset();
  return plan;
}

namespace {

// deterministic Fisher-Yates
void shuffle_indices(std::vector<int>* idx, std::mt19937_64& rng) {
  for (size_t i = idx->size(); i > 1; --i) {
    auto j = static_cast<size_t>(rng() % i);
    std::swap((*idx)[i - 1], (*idx)[j]);
  }
}

std::vector<std::vector<int>> make_batches(const Manifest& manifest,
                                           const FeatureSet& feats,
                                           int batch_frames,
                                           std::mt19937_64& rng) {
  std::vector<int> order(manifest.utterances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  shuffle_indices(&order, rng);

  std::vector<std::vector<int>> batches;
  std::vector<int> cur;
  int cur_frames = 0;
  for (int i : order) {
    const auto& id = manifest.utterances[i].id;
    if (!feats.has(id)) continue;
    cur.push_back(i);
    cur_frames += feats.at(id).frames();
    if (cur_frames >= batch_frames) {
      batches.push_back(std::move(cur));
      cur.clear();
      cur_frames = 0;
    }
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

void scale_grads(const std::vector<Tensor>& params, double s) {
  for (const auto& p : params)
    for (auto& g : const_cast<Tensor&>(p).grad()) g *= s;
}

}  // namespace

RunMetrics pretrain_run(EncoderModel* encoder, PretrainModel* head,
                        const Manifest& manifest, const FeatureSet& feats,
                        const LabelStore& labels, const MaskConfig& mask_cfg,
                        const TrainConfig& cfg,
                        const StreamingSampler* streaming,
                        const std::function<void(int)>& on_epoch_end) {
  mask_cfg.validate();
  std::vector<Tensor> params = encoder->parameters();
  for (auto& p : head->parameters()) params.push_back(p);
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.warmup_steps = cfg.warmup_steps;
  acfg.grad_clip = cfg.grad_clip;
  Adam opt(params, acfg);

  RunMetrics metrics;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(
        derive_seed(cfg.seed, "pretrain/shuffle/" + std::to_string(epoch)));
    std::mt19937_64 mask_rng(
        derive_seed(cfg.seed, "pretrain/mask/" + std::to_string(epoch)));
    std::mt19937_64 plan_rng(
        derive_seed(cfg.seed, "pretrain/plan/" + std::to_string(epoch)));
    auto batches = make_batches(manifest, feats, cfg.batch_frames, shuffle_rng);

    EpochMetrics em;
    double loss_acc = 0, acc_acc = 0;
    int64_t frames_acc = 0;
    for (const auto& batch : batches) {
      PlanSpec plan;
      if (streaming) plan = streaming->sample(plan_rng);

      opt.zero_grad();
      int64_t batch_masked = 0;
      double batch_loss = 0, batch_hits = 0;
      for (int i : batch) {
        const auto& utt = manifest.utterances[i];
        const FeatureMatrix& f = feats.at(utt.id);
        auto mask = sample_mask(f.frames(), mask_cfg, mask_rng);
        if (!labels.has(utt.id)) {
          ++em.skipped_utterances;
          continue;
        }
        const LabelRecord& rec = labels.at(utt.id);
        std::vector<int> lab(rec.labels.begin(), rec.labels.end());

        try {
          Tape tape;
          Tensor x = ad::make_leaf({f.frames(), f.dim()},
                                   std::vector<double>(f.m.v), false);
          Tensor masked = apply_mask(tape, x, mask, head->mask_embedding);
          StackOutputs out =
              encoder_forward(tape, *encoder, masked, f.frame_rate, plan);
          int T_out = out.final.dim(0);
          // length bookkeeping guard: labels must cover the output range
          double expect = T_out * rec.frame_rate / out.output_frame_rate;
          if (std::fabs(expect - static_cast<double>(lab.size())) >
              std::max(4.0, 0.1 * expect))
            throw DataError("label/length mismatch for " + utt.id);
          AlignedTargets tgt = reduce_mask_and_labels(
              mask, f.frame_rate, lab, rec.frame_rate, out.output_frame_rate,
              T_out);
          int64_t n_masked = 0;
          for (auto m : tgt.mask) n_masked += m;
          if (n_masked == 0) continue;  // nothing to predict in this draw

          Tensor loss = pretrain_loss(tape, out.final, head->head, tgt.mask,
                                      tgt.labels);
          double acc =
              masked_accuracy(out.final, head->head, tgt.mask, tgt.labels);
          // weight by masked count so the batch objective is the
          // masked-frame-weighted mean
          Tensor weighted =
              tape.scalar_mul(loss, static_cast<double>(n_masked));
          tape.backward(weighted);
          batch_masked += n_masked;
          batch_loss += loss.scalar() * static_cast<double>(n_masked);
          batch_hits += acc * static_cast<double>(n_masked);
        } catch (const DataError&) {
          ++em.skipped_utterances;
        }
      }
      if (batch_masked == 0) continue;
      scale_grads(params, 1.0 / static_cast<double>(batch_masked));
      opt.step();
      ++em.steps;
      double mean_loss = batch_loss / static_cast<double>(batch_masked);
      metrics.step_losses.push_back(mean_loss);
      loss_acc += batch_loss;
      acc_acc += batch_hits;
      frames_acc += batch_masked;
      if (cfg.verbose && em.steps % 20 == 0)
        std::fprintf(stderr, "  pretrain epoch %d step %lld loss %.4f\n",
                     epoch, static_cast<long long>(em.steps), mean_loss);
    }
    em.loss = frames_acc ? loss_acc / static_cast<double>(frames_acc) : 0.0;
    em.masked_accuracy =
        frames_acc ? acc_acc / static_cast<double>(frames_acc) : 0.0;
    metrics.epochs.push_back(em);
    if (cfg.verbose)
      std::fprintf(stderr, "pretrain epoch %d: loss %.4f acc %.3f (%lld steps)\n",
                   epoch, em.loss, em.masked_accuracy,
                   static_cast<long long>(em.steps));
    if (on_epoch_end) on_epoch_end(epoch);
  }
  return metrics;
}

RunMetrics finetune_run(TransducerModel* model, const Manifest& manifest,
                        const FeatureSet& feats, const BpeModel& bpe,
                        const TrainConfig& cfg,
                        const StreamingSampler* streaming,
                        const std::function<void(int)>& on_epoch_end) {
  std::vector<Tensor> params = model->parameters();
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.warmup_steps = cfg.warmup_steps;
  acfg.grad_clip = cfg.grad_clip;
  Adam opt(params, acfg);

  RunMetrics metrics;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(
        derive_seed(cfg.seed, "finetune/shuffle/" + std::to_string(epoch)));
    std::mt19937_64 plan_rng(
        derive_seed(cfg.seed, "finetune/plan/" + std::to_string(epoch)));
    auto batches = make_batches(manifest, feats, cfg.batch_frames, shuffle_rng);

    EpochMetrics em;
    double loss_acc = 0;
    int64_t tokens_acc = 0;
    for (const auto& batch : batches) {
      PlanSpec plan;
      if (streaming) plan = streaming->sample(plan_rng);

      opt.zero_grad();
      int64_t batch_tokens = 0;
      double batch_loss = 0;
      for (int i : batch) {
        const auto& utt = manifest.utterances[i];
        if (!utt.text) {
          ++em.skipped_utterances;
          continue;
        }
        std::vector<int> y = bpe_encode(bpe, *utt.text);
        const FeatureMatrix& f = feats.at(utt.id);
        try {
          Tape tape;
          Tensor x = ad::make_leaf({f.frames(), f.dim()},
                                   std::vector<double>(f.m.v), false);
          StackOutputs out =
              encoder_forward(tape, model->encoder, x, f.frame_rate, plan);
          Tensor lattice = build_lattice(tape, *model, out.final, y);
          Tensor loss = transducer_loss(tape, lattice, y, out.final.dim(0));
          tape.backward(loss);
          batch_tokens += static_cast<int64_t>(y.size()) + 1;
          batch_loss += loss.scalar();
        } catch (const DataError&) {
          ++em.skipped_utterances;
        }
      }
      if (batch_tokens == 0) continue;
      scale_grads(params, 1.0 / static_cast<double>(batch_tokens));
      opt.step();
      ++em.steps;
      metrics.step_losses.push_back(batch_loss /
                                    static_cast<double>(batch_tokens));
      loss_acc += batch_loss;
      tokens_acc += batch_tokens;
      if (cfg.verbose && em.steps % 20 == 0)
        std::fprintf(stderr, "  finetune epoch %d step %lld loss/token %.4f\n",
                     epoch, static_cast<long long>(em.steps),
                     batch_loss / static_cast<double>(batch_tokens));
    }
    em.loss = tokens_acc ? loss_acc / static_cast<double>(tokens_acc) : 0.0;
    metrics.epochs.push_back(em);
    if (cfg.verbose)
      std::fprintf(stderr, "finetune epoch %d: loss/token %.4f (%lld steps)\n",
                   epoch, em.loss, static_cast<long long>(em.steps));
    if (on_epoch_end) on_epoch_end(epoch);
  }
  return metrics;
}

std::map<std::string, std::string> decode_corpus(
    const TransducerModel& model, const Manifest& manifest,
    const FeatureSet& feats, const BpeModel& bpe, const PlanSpec& plan,
    int beam, int max_symbols_per_frame,
    std::map<std::string, double>* scores) {
  std::map<std::string, std::string> out;
  for (const auto& u : manifest.utterances) {
    Hypothesis hyp =
        beam_decode(model, feats.at(u.id), plan, beam, max_symbols_per_frame);
    out[u.id] = bpe_decode(bpe, hyp.tokens);
    if (scores) (*scores)[u.id] = hyp.score;
  }
  return out;
}

// ---------------------------------------------------------------------------
// model serialization
// ---------------------------------------------------------------------------

namespace {

json encoder_config_json(const EncoderConfig& c) {
  return json{{"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"ff_multiplier", c.ff_multiplier},
              {"stack_downsample", c.stack_downsample},
              {"conv_embed_factor", c.conv_embed_factor},
              {"output_downsample_factor", c.output_downsample_factor},
              {"n_blocks_per_stack", c.n_blocks_per_stack},
              {"causal", c.causal},
              {"n_mels", c.n_mels},
              {"max_positions", c.max_positions}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.d_model = j.at("d_model").get<std::vector<int>>();
  c.n_heads = j.at("n_heads").get<int>();
  c.ff_multiplier = j.at("ff_multiplier").get<int>();
  c.stack_downsample = j.at("stack_downsample").get<std::vector<int>>();
  c.conv_embed_factor = j.at("conv_embed_factor").get<int>();
  c.output_downsample_factor = j.at("output_downsample_factor").get<int>();
  c.n_blocks_per_stack = j.at("n_blocks_per_stack").get<int>();
  c.causal = j.at("causal").get<bool>();
  c.n_mels = j.at("n_mels").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  return c;
}

}  // namespace

void save_encoder_checkpoint(const EncoderModel& encoder,
                             const PretrainModel* pretrain,
                             const std::string& path) {
  Checkpoint ckpt;
  ckpt.config["type"] = "encoder";
  ckpt.config["encoder"] = encoder_config_json(encoder.config);
  for (const auto& [name, t] : encoder.params)
    ckpt.params.emplace_back("encoder." + name, t);
  if (pretrain) {
    ckpt.config["pretrain"] = {{"n_classes", pretrain->head.n_classes()},
                               {"tau", pretrain->head.tau}};
    ckpt.params.emplace_back("pretrain.A", pretrain->head.A);
    ckpt.params.emplace_back("pretrain.mask_embedding",
                             pretrain->mask_embedding);
  }
  save_checkpoint(ckpt, path);
}

EncoderModel load_encoder_checkpoint(const std::string& path,
                                     PretrainModel* pretrain) {
  Checkpoint ckpt = load_checkpoint(path);
  std::string type = ckpt.config.value("type", "");
  if (type != "encoder" && type != "transducer")
    throw FormatError("checkpoint: not a model checkpoint: " + path);

  EncoderModel model;
  model.config = encoder_config_from_json(ckpt.config.at("encoder"));
  for (auto& [name, t] : ckpt.params)
    if (name.rfind("encoder.", 0) == 0)
      model.params.emplace_back(name.substr(8), t);
  model.rebuild_index();
  if (model.params.empty())
    throw FormatError("checkpoint: no encoder parameters in " + path);

  if (pretrain) {
    if (!ckpt.config.contains("pretrain"))
      throw FormatError("checkpoint: no pretrain head in " + path);
    pretrain->head.tau = ckpt.config["pretrain"].at("tau").get<double>();
    for (auto& [name, t] : ckpt.params) {
      if (name == "pretrain.A") pretrain->head.A = t;
      if (name == "pretrain.mask_embedding") pretrain->mask_embedding = t;
    }
    if (!pretrain->head.A.defined() || !pretrain->mask_embedding.defined())
      throw FormatError("checkpoint: incomplete pretrain head in " + path);
  }
  return model;
}

void save_transducer_checkpoint(const TransducerModel& model,
                                const std::string& path) {
  Checkpoint ckpt;
  ckpt.config["type"] = "transducer";
  ckpt.config["encoder"] = encoder_config_json(model.encoder.config);
  ckpt.config["predictor"] = {{"context_size", model.pred_cfg.context_size},
                              {"embed_dim", model.pred_cfg.embed_dim},
                              {"hidden", model.pred_cfg.hidden}};
  ckpt.config["joiner"] = {{"hidden", model.join_cfg.hidden}};
  ckpt.config["n_out"] = model.n_out;
  for (const auto& [name, t] : model.encoder.params)
    ckpt.params.emplace_back("encoder." + name, t);
  for (const auto& [name, t] : model.params)
    ckpt.params.emplace_back("head." + name, t);
  save_checkpoint(ckpt, path);
}

TransducerModel load_transducer_checkpoint(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.config.value("type", "") != "transducer")
    throw FormatError("checkpoint: not a transducer checkpoint: " + path);

  TransducerModel model;
  model.encoder.config = encoder_config_from_json(ckpt.config.at("encoder"));
  model.pred_cfg.context_size =
      ckpt.config["predictor"].at("context_size").get<int>();
  model.pred_cfg.embed_dim = ckpt.config["predictor"].at("embed_dim").get<int>();
  model.pred_cfg.hidden = ckpt.config["predictor"].at("hidden").get<int>();
  model.join_cfg.hidden = ckpt.config["joiner"].at("hidden").get<int>();
  model.n_out = ckpt.config.at("n_out").get<int>();
  for (auto& [name, t] : ckpt.params) {
    if (name.rfind("encoder.", 0) == 0)
      model.encoder.params.emplace_back(name.substr(8), t);
    else if (name.rfind("head.", 0) == 0)
      model.params.emplace_back(name.substr(5), t);
  }
  model.encoder.rebuild_index();
  model.rebuild_index();
  return model;
}

}  // namespace sslasr
