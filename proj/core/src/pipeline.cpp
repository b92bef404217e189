// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sslasr/audio.hpp"
#include "sslasr/checkpoint.hpp"
#include "sslasr/common.hpp"
#include "sslasr/eval.hpp"

namespace sslasr {

namespace fs = std::filesystem;
using nlohmann::json;

void PipelineOptions::validate() const {
  if (workdir.empty()) throw ConfigError("pipeline: workdir is required");
  if (pretrain_manifest.empty() || finetune_manifest.empty())
    throw ConfigError("pipeline: pretrain and finetune manifests are required");
  if (iterations.empty())
    throw ConfigError("pipeline: iteration plan must be non-empty");
  if (codebook_source != "asr" && codebook_source != "fbank" &&
      codebook_source != "mfcc")
    throw ConfigError("pipeline: codebook_source must be asr, fbank or mfcc");
  if (kmeans_k < 2) throw ConfigError("pipeline: kmeans_k must be >= 2");
  if (vocab_size < 3) throw ConfigError("pipeline: vocab_size too small");
  encoder.validate();
  predictor.validate();
  joiner.validate();
  mask.validate();
}

PipelineOptions options_from_config(const KvConfig& cfg) {
  PipelineOptions o;
  o.workdir = cfg.get_str("workdir", "");
  o.pretrain_manifest = cfg.get_str("pretrain_manifest", "");
  o.finetune_manifest = cfg.get_str("finetune_manifest", "");
  for (const auto& [key, value] : cfg.items()) {
    if (key.rfind("test_manifest", 0) == 0) {
      std::string name = key.size() > 13 ? key.substr(14) : "test";
      if (name.empty()) name = "test";
      o.test_manifests.emplace_back(name, value);
    }
  }
  o.alignments = cfg.get_str("alignments", "");
  o.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));

  o.features.n_fft = static_cast<int>(cfg.get_int("n_fft", o.features.n_fft));
  o.features.hop = static_cast<int>(cfg.get_int("hop", o.features.hop));
  o.features.n_mels = static_cast<int>(cfg.get_int("n_mels", o.features.n_mels));

  o.encoder.d_model = cfg.get_int_list("d_model", o.encoder.d_model);
  o.encoder.n_heads = static_cast<int>(cfg.get_int("n_heads", o.encoder.n_heads));
  o.encoder.ff_multiplier =
      static_cast<int>(cfg.get_int("ff_multiplier", o.encoder.ff_multiplier));
  o.encoder.stack_downsample =
      cfg.get_int_list("stack_downsample", o.encoder.stack_downsample);
  o.encoder.conv_embed_factor = static_cast<int>(
      cfg.get_int("conv_embed_factor", o.encoder.conv_embed_factor));
  o.encoder.output_downsample_factor = static_cast<int>(
      cfg.get_int("output_downsample_factor", o.encoder.output_downsample_factor));
  o.encoder.n_blocks_per_stack = static_cast<int>(
      cfg.get_int("n_blocks_per_stack", o.encoder.n_blocks_per_stack));
  o.encoder.causal = cfg.get_bool("causal", false);
  o.encoder.n_mels = o.features.n_mels;

  o.predictor.context_size =
      static_cast<int>(cfg.get_int("context_size", o.predictor.context_size));
  o.predictor.embed_dim =
      static_cast<int>(cfg.get_int("predictor_embed_dim", o.predictor.embed_dim));
  o.predictor.hidden =
      static_cast<int>(cfg.get_int("predictor_hidden", o.predictor.hidden));
  o.joiner.hidden =
      static_cast<int>(cfg.get_int("joiner_hidden", o.joiner.hidden));
  o.vocab_size = static_cast<int>(cfg.get_int("vocab_size", o.vocab_size));

  o.mask.span_frames =
      static_cast<int>(cfg.get_int("mask_span", o.mask.span_frames));
  o.mask.start_prob = cfg.get_double("mask_start_prob", o.mask.start_prob);
  o.tau = cfg.get_double("tau", o.tau);
  o.kmeans_k = static_cast<int>(cfg.get_int("kmeans_k", o.kmeans_k));
  o.kmeans_iters = static_cast<int>(cfg.get_int("kmeans_iters", o.kmeans_iters));
  o.kmeans_max_frames = cfg.get_int("kmeans_max_frames", o.kmeans_max_frames);
  o.codebook_source = cfg.get_str("codebook_source", o.codebook_source);
  o.asr_selector = static_cast<int>(cfg.get_int("asr_selector", o.asr_selector));
  o.spectral_stack =
      static_cast<int>(cfg.get_int("spectral_stack", o.spectral_stack));

  int n_it = static_cast<int>(cfg.get_int("iterations", 2));
  int pre_ep = static_cast<int>(cfg.get_int("pretrain_epochs", 2));
  int pre_ep_later = static_cast<int>(cfg.get_int("pretrain_epochs_later", pre_ep));
  int ft_ep = static_cast<int>(cfg.get_int("finetune_epochs", 4));
  o.iterations.clear();
  for (int i = 0; i < std::max(1, n_it); ++i)
    o.iterations.push_back({i == 0 ? pre_ep : pre_ep_later, ft_ep});
  o.stage1_epochs = static_cast<int>(cfg.get_int("stage1_epochs", ft_ep));

  o.pretrain_lr = cfg.get_double("pretrain_lr", o.pretrain_lr);
  o.finetune_lr = cfg.get_double("finetune_lr", o.finetune_lr);
  o.warmup_steps = static_cast<int>(cfg.get_int("warmup_steps", o.warmup_steps));
  o.batch_frames = static_cast<int>(cfg.get_int("batch_frames", o.batch_frames));
  o.grad_clip = cfg.get_double("grad_clip", o.grad_clip);
  o.fresh_encoder_each_iteration =
      cfg.get_bool("fresh_encoder_each_iteration", true);
  o.beam = static_cast<int>(cfg.get_int("beam", o.beam));
  o.max_symbols_per_frame = static_cast<int>(
      cfg.get_int("max_symbols_per_frame", o.max_symbols_per_frame));
  o.verbose = cfg.get_bool("verbose", false);
  o.decode_chunk_s = cfg.get_double("decode_chunk_s", o.decode_chunk_s);
  o.decode_context_s = cfg.get_double("decode_context_s", o.decode_context_s);
  return o;
}

namespace {

/// One pipeline instance per workdir.
class WorkdirLock {
 public:
  explicit WorkdirLock(const std::string& workdir)
      : path_(workdir + "/lock") {
    fs::create_directories(workdir);
    if (fs::exists(path_))
      throw DataError("pipeline: workdir is locked (" + path_ +
                      " exists; remove it if no other run is active)");
    std::ofstream out(path_);
    out << "locked\n";
  }
  ~WorkdirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  std::string path_;
};

TrainConfig train_config(const PipelineOptions& o, int epochs, double lr,
                         uint64_t seed) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.lr = lr;
  tc.warmup_steps = o.warmup_steps;
  tc.grad_clip = o.grad_clip;
  tc.batch_frames = o.batch_frames;
  tc.seed = seed;
  tc.verbose = o.verbose;
  return tc;
}

json wer_to_json(const WerReport& r) {
  json sets = json::array();
  for (const auto& s : r.sets)
    sets.push_back({{"name", s.name},
                    {"ref_words", s.ref_words},
                    {"sub", s.counts.sub},
                    {"del", s.counts.del},
                    {"ins", s.counts.ins},
                    {"wer", s.wer()}});
  return json{{"sets", sets}, {"weighted_avg", r.weighted_average()}};
}

}  // namespace

Pipeline::Pipeline(PipelineOptions opts) : opts_(std::move(opts)) {
  opts_.validate();
  fs::create_directories(opts_.workdir);
  state_path_ = opts_.workdir + "/state.json";
  load_state();
}

std::string Pipeline::stage_dir(const std::string& tag) const {
  return opts_.workdir + "/" + tag;
}

void Pipeline::load_state() {
  if (!fs::exists(state_path_)) {
    state_ = json{{"stages", json::object()}};
    return;
  }
  json parsed = json::parse(read_text_file(state_path_), nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("stages"))
    throw DataError("pipeline: state file is corrupt (" + state_path_ +
                    "); remove it or the whole workdir to restart");
  state_ = parsed;
}

void Pipeline::save_state() {
  write_text_file(state_path_, state_.dump(2) + "\n");
}

bool Pipeline::stage_done(const std::string& tag,
                          const std::string& path) const {
  const auto& stages = state_.at("stages");
  if (!stages.contains(tag)) return false;
  for (const auto& art : stages.at(tag).at("artifacts")) {
    std::string p = art.at("path").get<std::string>();
    if (!fs::exists(p)) return false;
    if (hex64(fnv1a64_file(p)) != art.at("checksum").get<std::string>())
      return false;
  }
  // the queried artifact must be one of the recorded ones
  for (const auto& art : stages.at(tag).at("artifacts"))
    if (art.at("path") == path) return true;
  return false;
}

void Pipeline::mark_done(const std::string& tag, const std::string& path,
                         const json& inputs) {
  json artifacts = json::array();
  artifacts.push_back(
      {{"path", path}, {"checksum", hex64(fnv1a64_file(path))}});
  if (state_["stages"].contains(tag)) {
    for (const auto& art : state_["stages"][tag]["artifacts"])
      if (art.at("path") != path) artifacts.push_back(art);
  }
  state_["stages"][tag] = {{"artifacts", artifacts}, {"inputs", inputs}};
  save_state();
}

BpeModel Pipeline::ensure_bpe() {
  std::string path = opts_.workdir + "/bpe.json";
  if (stage_done("bpe", path)) return load_bpe(path);
  Manifest ft = load_manifest(opts_.finetune_manifest, Split::finetune);
  std::vector<std::string> texts;
  for (const auto& u : ft.utterances)
    if (u.text) texts.push_back(*u.text);
  BpeModel bpe = bpe_train(texts, opts_.vocab_size);
  save_bpe(bpe, path);
  mark_done("bpe", path,
            {{"finetune_manifest", opts_.finetune_manifest}});
  return bpe;
}

std::string Pipeline::stage1() {
  std::string dir = stage_dir("it0/stage1");
  std::string path = dir + "/ckpt.bin";
  if (stage_done("it0/stage1", path)) return path;

  if (opts_.verbose) std::fprintf(stderr, "[stage1] seed ASR training\n");
  BpeModel bpe = ensure_bpe();
  Manifest ft = load_manifest(opts_.finetune_manifest, Split::finetune);
  if (ft.utterances.empty())
    throw DataError("stage1: no labeled data in the finetune manifest");
  FeatureSet feats = FeatureSet::build(ft, opts_.features);

  EncoderModel enc =
      init_encoder(opts_.encoder, derive_seed(opts_.seed, "it0/stage1/enc"));
  TransducerModel model =
      init_transducer(enc, opts_.predictor, opts_.joiner, bpe.vocab_size(),
                      derive_seed(opts_.seed, "it0/stage1/head"));
  TrainConfig tc = train_config(opts_, opts_.stage1_epochs, opts_.finetune_lr,
                                derive_seed(opts_.seed, "it0/stage1/train"));
  StreamingSampler sampler = StreamingSampler::standard_grid();
  finetune_run(&model, ft, feats, bpe, tc,
               opts_.encoder.causal ? &sampler : nullptr);
  save_transducer_checkpoint(model, path);
  mark_done("it0/stage1", path,
            {{"finetune_manifest", opts_.finetune_manifest},
             {"bpe", hex64(fnv1a64_file(opts_.workdir + "/bpe.json"))},
             {"seed", opts_.seed}});
  return path;
}

std::string Pipeline::stage2(int iteration, const std::string& source_ckpt,
                             bool source_is_pretrained) {
  std::string tag = "it" + std::to_string(iteration) + "/stage2";
  std::string dir = stage_dir(tag);
  std::string labels_path = dir + "/labels.bin";
  std::string codebook_path = dir + "/codebook.bin";
  if (stage_done(tag, labels_path)) return labels_path;

  if (opts_.verbose)
    std::fprintf(stderr, "[%s] codebook + label extraction\n", tag.c_str());
  Manifest pre = load_manifest(opts_.pretrain_manifest, Split::pretrain);
  FeatureSet feats = FeatureSet::build(pre, opts_.features);

  bool spectral_first =
      iteration == 1 && opts_.codebook_source != "asr";
  FeatureKind kind = FeatureKind::latent;
  std::function<FeatureMatrix(const Utterance&)> feature_fn;

  EncoderModel src_encoder;
  int selector = opts_.asr_selector;
  if (spectral_first) {
    if (opts_.codebook_source == "fbank") {
      kind = FeatureKind::fbank;
      feature_fn = [&feats](const Utterance& u) { return feats.at(u.id); };
    } else {
      kind = FeatureKind::mfcc;
      const FeatureConfig fc = opts_.features;
      feature_fn = [fc](const Utterance& u) {
        AudioBuffer buf = read_wav(u.audio_path);
        return cmvn(mfcc(fbank(buf, fc), fc.n_mfcc));
      };
    }
  } else {
    if (source_is_pretrained) {
      src_encoder = load_encoder_checkpoint(source_ckpt);
      selector = opts_.spectral_stack;
    } else {
      src_encoder = load_transducer_checkpoint(source_ckpt).encoder;
      selector = opts_.asr_selector;
    }
    feature_fn = [&feats, &src_encoder, selector](const Utterance& u) {
      return extract_features(src_encoder, feats.at(u.id), selector);
    };
  }

  // gather a (possibly subsampled) frame sample for the fit
  std::vector<double> sample;
  int dim = -1;
  double rate = 0;
  int64_t total = 0;
  for (const auto& u : pre.utterances) {
    FeatureMatrix f = feature_fn(u);
    if (dim < 0) {
      dim = f.dim();
      rate = f.frame_rate;
    }
    total += f.frames();
    sample.insert(sample.end(), f.m.v.begin(), f.m.v.end());
  }
  if (dim <= 0 || total == 0) throw DataError("stage2: empty pretrain corpus");
  if (total > opts_.kmeans_max_frames) {
    std::vector<double> sub;
    sub.reserve(static_cast<size_t>(opts_.kmeans_max_frames) * dim);
    double stride = static_cast<double>(total) / opts_.kmeans_max_frames;
    for (int64_t i = 0; i < opts_.kmeans_max_frames; ++i) {
      auto src = static_cast<int64_t>(i * stride);
      sub.insert(sub.end(), sample.begin() + src * dim,
                 sample.begin() + (src + 1) * dim);
    }
    sample = std::move(sub);
    total = opts_.kmeans_max_frames;
  }

  Codebook cb = kmeans_fit(sample, static_cast<int>(total), dim, opts_.kmeans_k,
                           opts_.kmeans_iters,
                           derive_seed(opts_.seed, tag + "/kmeans"));
  cb.feature_kind = kind;
  cb.frame_rate = rate;
  save_codebook(cb, codebook_path);

  fs::remove(labels_path);  // a fresh fit invalidates any partial store
  LabelStore store = LabelStore::open(labels_path);
  auto report = extract_labels_for_corpus(feature_fn, pre, cb, &store);
  if (!report.failed_ids.empty() && opts_.verbose)
    std::fprintf(stderr, "[%s] %zu utterances failed label extraction\n",
                 tag.c_str(), report.failed_ids.size());

  json inputs = {{"source", spectral_first ? opts_.codebook_source : source_ckpt},
                 {"selector", spectral_first ? -2 : selector},
                 {"k", opts_.kmeans_k},
                 {"seed", opts_.seed}};
  if (!source_ckpt.empty())
    inputs["source_checksum"] = hex64(fnv1a64_file(source_ckpt));
  mark_done(tag, codebook_path, inputs);
  mark_done(tag, labels_path, inputs);
  return labels_path;
}

std::string Pipeline::stage3(int iteration, const std::string& label_path,
                             bool causal_streaming,
                             const std::string& tag_prefix) {
  std::string tag = tag_prefix + "/stage3";
  std::string path = stage_dir(tag) + "/ckpt.bin";
  if (stage_done(tag, path)) return path;

  if (opts_.verbose)
    std::fprintf(stderr, "[%s] masked-prediction pre-training\n", tag.c_str());
  Manifest pre = load_manifest(opts_.pretrain_manifest, Split::pretrain);
  FeatureSet feats = FeatureSet::build(pre, opts_.features);
  LabelStore labels = LabelStore::open(label_path);

  EncoderModel enc;
  std::string prev_ckpt = tag_prefix == "it" + std::to_string(iteration)
                              ? stage_dir("it" + std::to_string(iteration - 1) +
                                          "/stage3") + "/ckpt.bin"
                              : "";
  if (!opts_.fresh_encoder_each_iteration && iteration > 1 &&
      !prev_ckpt.empty() && fs::exists(prev_ckpt)) {
    enc = load_encoder_checkpoint(prev_ckpt);
  } else {
    enc = init_encoder(opts_.encoder, derive_seed(opts_.seed, tag + "/enc"));
  }
  PretrainModel head = init_pretrain_model(
      opts_.kmeans_k, opts_.encoder.output_dim(), opts_.encoder.n_mels,
      opts_.tau, derive_seed(opts_.seed, tag + "/head"));

  int epochs = opts_.iterations[std::min<size_t>(iteration - 1,
                                                 opts_.iterations.size() - 1)]
                   .pretrain_epochs;
  TrainConfig tc = train_config(opts_, epochs, opts_.pretrain_lr,
                                derive_seed(opts_.seed, tag + "/train"));
  StreamingSampler sampler = StreamingSampler::standard_grid();
  pretrain_run(&enc, &head, pre, feats, labels, opts_.mask, tc,
               causal_streaming ? &sampler : nullptr,
               [&](int) { save_encoder_checkpoint(enc, &head, path); });
  if (epochs == 0) save_encoder_checkpoint(enc, &head, path);
  mark_done(tag, path,
            {{"labels", hex64(fnv1a64_file(label_path))},
             {"epochs", epochs},
             {"seed", opts_.seed}});
  return path;
}

std::string Pipeline::stage4(int iteration, const std::string& stage3_ckpt,
                             bool causal_streaming,
                             const std::string& tag_prefix) {
  std::string tag = tag_prefix + "/stage4";
  std::string path = stage_dir(tag) + "/ckpt.bin";
  if (stage_done(tag, path)) return path;

  if (opts_.verbose)
    std::fprintf(stderr, "[%s] transducer fine-tuning\n", tag.c_str());
  BpeModel bpe = ensure_bpe();
  Manifest ft = load_manifest(opts_.finetune_manifest, Split::finetune);
  FeatureSet feats = FeatureSet::build(ft, opts_.features);

  EncoderModel enc = stage3_ckpt.empty()
                         ? init_encoder(opts_.encoder,
                                        derive_seed(opts_.seed, tag + "/enc"))
                         : load_encoder_checkpoint(stage3_ckpt);
  TransducerModel model =
      init_transducer(enc, opts_.predictor, opts_.joiner, bpe.vocab_size(),
                      derive_seed(opts_.seed, tag + "/head"));
  int epochs = opts_.iterations[std::min<size_t>(iteration - 1,
                                                 opts_.iterations.size() - 1)]
                   .finetune_epochs;
  TrainConfig tc = train_config(opts_, epochs, opts_.finetune_lr,
                                derive_seed(opts_.seed, tag + "/train"));
  StreamingSampler sampler = StreamingSampler::standard_grid();
  finetune_run(&model, ft, feats, bpe, tc,
               causal_streaming ? &sampler : nullptr);
  save_transducer_checkpoint(model, path);
  json inputs = {{"epochs", epochs}, {"seed", opts_.seed}};
  if (!stage3_ckpt.empty())
    inputs["stage3"] = hex64(fnv1a64_file(stage3_ckpt));
  mark_done(tag, path, inputs);
  return path;
}

json Pipeline::evaluate(const TransducerModel& model, const PlanSpec& plan,
                        const std::string& hyp_dir) {
  BpeModel bpe = ensure_bpe();
  std::vector<std::pair<std::string, Manifest>> sets;
  std::map<std::string, std::string> all_hyps;
  fs::create_directories(hyp_dir);
  for (const auto& [name, path] : opts_.test_manifests) {
    Manifest m = load_manifest(path, Split::test);
    FeatureSet feats = FeatureSet::build(m, opts_.features);
    std::map<std::string, double> scores;
    auto hyps = decode_corpus(model, m, feats, bpe, plan, opts_.beam,
                              opts_.max_symbols_per_frame, &scores);
    std::string lines;
    for (const auto& [id, hyp] : hyps) {
      json j = {{"id", id}, {"hyp", hyp}, {"score", scores[id]}};
      lines += j.dump() + "\n";
    }
    write_text_file(hyp_dir + "/hyps_" + name + ".jsonl", lines);
    all_hyps.insert(hyps.begin(), hyps.end());
    sets.emplace_back(name, std::move(m));
  }
  if (sets.empty()) return json{{"sets", json::array()}, {"weighted_avg", 0.0}};
  return wer_to_json(wer(sets, all_hyps));
}

json Pipeline::run(int n_iterations) {
  if (n_iterations < 1)
    throw ConfigError("pipeline: need at least one iteration");
  WorkdirLock lock(opts_.workdir);

  json report;
  report["codebook_source"] = opts_.codebook_source;
  report["seed"] = opts_.seed;

  std::string stage1_ckpt = stage1();
  {
    TransducerModel baseline = load_transducer_checkpoint(stage1_ckpt);
    report["baseline"] =
        evaluate(baseline, PlanSpec{}, stage_dir("it0/stage1"));
  }

  Alignments align;
  if (!opts_.alignments.empty()) align = load_alignments(opts_.alignments);

  report["iterations"] = json::array();
  std::string prev_stage4 = stage1_ckpt;
  std::string prev_stage3;
  for (int i = 1; i <= n_iterations; ++i) {
    std::string it_tag = "it" + std::to_string(i);
    json it_report;
    it_report["iteration"] = i;

    // label source lineage: iteration 1 uses the seed ASR (or spectral
    // features for the fbank/mfcc baseline); later iterations use the
    // previous fine-tuned encoder, or the previous pre-trained encoder
    // when running the spectral baseline.
    std::string source_ckpt;
    bool source_is_pretrained = false;
    if (opts_.codebook_source == "asr") {
      source_ckpt = prev_stage4;
    } else if (i > 1) {
      source_ckpt = prev_stage3;
      source_is_pretrained = true;
    }
    std::string labels = stage2(i, source_ckpt, source_is_pretrained);

    if (!align.empty()) {
      LabelStore store = LabelStore::open(labels);
      ClusterMetrics cm = codebook_quality(store, align);
      it_report["codebook"] = {{"purity", cm.purity}, {"pnmi", cm.pnmi}};
    }

    std::string s3 = stage3(i, labels, opts_.encoder.causal, it_tag);
    std::string s4 = stage4(i, s3, opts_.encoder.causal, it_tag);
    prev_stage3 = s3;
    prev_stage4 = s4;

    TransducerModel model = load_transducer_checkpoint(s4);
    PlanSpec plan;
    if (opts_.encoder.causal) {
      plan.chunk_s = opts_.decode_chunk_s;
      plan.left_context_s = opts_.decode_context_s;
    }
    it_report["wer"] = evaluate(model, plan, stage_dir(it_tag + "/stage4"));
    report["iterations"].push_back(it_report);
  }

  write_text_file(opts_.workdir + "/report.json", report.dump(2) + "\n");

  std::string table = "pipeline report (codebook_source=" +
                      opts_.codebook_source + ")\n\n";
  auto add_row = [&table](const std::string& name, const json& wer_json) {
    table += name + ":\n";
    for (const auto& s : wer_json["sets"]) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "  %-12s WER %6.2f%%\n",
                    s["name"].get<std::string>().c_str(),
                    100.0 * s["wer"].get<double>());
      table += buf;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "  %-12s WER %6.2f%%\n", "weighted-avg",
                  100.0 * wer_json["weighted_avg"].get<double>());
    table += buf;
  };
  add_row("from-scratch (stage 1)", report["baseline"]);
  for (const auto& it : report["iterations"]) {
    add_row("iteration " + std::to_string(it["iteration"].get<int>()),
            it["wer"]);
    if (it.contains("codebook")) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "  codebook purity %.4f pnmi %.4f\n",
                    it["codebook"]["purity"].get<double>(),
                    it["codebook"]["pnmi"].get<double>());
      table += buf;
    }
  }
  write_text_file(opts_.workdir + "/report.txt", table);
  return report;
}

json Pipeline::run_streaming(const std::string& label_store_path,
                             const std::string& tag) {
  if (!opts_.encoder.causal)
    throw ConfigError("streaming: encoder config must set causal=true");
  WorkdirLock lock(opts_.workdir);

  std::string prefix = "stream-" + tag;
  std::string s3;
  if (!label_store_path.empty())
    s3 = stage3(1, label_store_path, true, prefix);
  std::string s4 = stage4(1, s3, true, prefix);

  TransducerModel model = load_transducer_checkpoint(s4);
  PlanSpec plan;
  plan.chunk_s = opts_.decode_chunk_s;
  plan.left_context_s = opts_.decode_context_s;

  json report;
  report["tag"] = tag;
  report["pretrained"] = !label_store_path.empty();
  report["decode_chunk_s"] = opts_.decode_chunk_s;
  report["decode_context_s"] = opts_.decode_context_s;
  report["wer"] = evaluate(model, plan, stage_dir(prefix + "/stage4"));
  write_text_file(opts_.workdir + "/report_" + prefix + ".json",
                  report.dump(2) + "\n");
  return report;
}

}  // namespace sslasr
