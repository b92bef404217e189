// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0
//
// Command-line entry point. Every subcommand echoes its fully-resolved
// configuration and seed before doing any work, writes its outputs under
// --workdir, and exits 0 on success, 1 on runtime errors, 2 on usage
// errors and 3 on configuration errors.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sslasr/audio.hpp"
#include "sslasr/bpe.hpp"
#include "sslasr/checkpoint.hpp"
#include "sslasr/codebook.hpp"
#include "sslasr/common.hpp"
#include "sslasr/config.hpp"
#include "sslasr/corpus.hpp"
#include "sslasr/eval.hpp"
#include "sslasr/features.hpp"
#include "sslasr/pipeline.hpp"
#include "sslasr/pretrain.hpp"
#include "sslasr/trainer.hpp"
#include "sslasr/transducer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sslasr;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string workdir;
  int64_t seed = -1;  // -1: take from config (default 1)

  KvConfig resolve() const {
    KvConfig cfg;
    if (!config_path.empty()) cfg = KvConfig::parse_file(config_path);
    for (const auto& o : overrides) cfg.set_pair(o);
    if (!workdir.empty()) {
      cfg.set("workdir", workdir);
    } else if (!cfg.has("workdir")) {
      const char* env = std::getenv("SSLASR_WORKDIR");
      if (env) cfg.set("workdir", env);
    }
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "key=value config file");
  cmd->add_option("--set", args->overrides,
                  "config override key=value (repeatable)");
  cmd->add_option("--workdir", args->workdir,
                  "output directory (falls back to $SSLASR_WORKDIR)");
  cmd->add_option("--seed", args->seed, "master random seed");
}

void echo_config(const KvConfig& cfg) {
  for (const auto& [k, v] : cfg.items())
    std::printf("config: %s = %s\n", k.c_str(), v.c_str());
  std::printf("seed: %lld\n",
              static_cast<long long>(cfg.get_int("seed", 1)));
  std::fflush(stdout);
}

std::string require_workdir(const KvConfig& cfg) {
  std::string wd = cfg.get_str("workdir", "");
  if (wd.empty())
    throw ConfigError("workdir is required (flag, config or SSLASR_WORKDIR)");
  fs::create_directories(wd);
  return wd;
}

SynthSpec synth_spec_from_config(const KvConfig& cfg) {
  SynthSpec spec;
  spec.n_symbols = static_cast<int>(cfg.get_int("synth_symbols", spec.n_symbols));
  spec.min_symbols = static_cast<int>(cfg.get_int("synth_min_symbols", spec.min_symbols));
  spec.max_symbols = static_cast<int>(cfg.get_int("synth_max_symbols", spec.max_symbols));
  spec.unit_duration_ms = cfg.get_double("synth_unit_ms", spec.unit_duration_ms);
  spec.noise_level = cfg.get_double("synth_noise", spec.noise_level);
  spec.hours_pretrain = cfg.get_double("synth_hours_pretrain", spec.hours_pretrain);
  spec.hours_finetune = cfg.get_double("synth_hours_finetune", spec.hours_finetune);
  spec.hours_test = cfg.get_double("synth_hours_test", spec.hours_test);
  spec.n_confusable_pairs =
      static_cast<int>(cfg.get_int("synth_confusable_pairs", spec.n_confusable_pairs));
  spec.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
  return spec;
}

FeatureConfig feature_config_from(const KvConfig& cfg) {
  FeatureConfig fc;
  fc.n_fft = static_cast<int>(cfg.get_int("n_fft", fc.n_fft));
  fc.hop = static_cast<int>(cfg.get_int("hop", fc.hop));
  fc.n_mels = static_cast<int>(cfg.get_int("n_mels", fc.n_mels));
  fc.n_mfcc = static_cast<int>(cfg.get_int("n_mfcc", fc.n_mfcc));
  return fc;
}

int cmd_synth_data(const CommonArgs& common) {
  KvConfig cfg = common.resolve();
  echo_config(cfg);
  std::string wd = require_workdir(cfg);
  SynthSpec spec = synth_spec_from_config(cfg);
  std::string out_dir = cfg.get_str("corpus_dir", wd + "/corpus");
  SynthResult res = synth_corpus(spec, out_dir);
  std::printf("synth-data: wrote %zu pretrain / %zu finetune / %zu test "
              "utterances under %s\n",
              res.pretrain.utterances.size(), res.finetune.utterances.size(),
              res.test.utterances.size(), out_dir.c_str());
  return 0;
}

int cmd_vad(const CommonArgs& common, const std::string& wav) {
  KvConfig cfg = common.resolve();
  echo_config(cfg);
  AudioBuffer buf = read_wav(wav);
  auto segs = energy_vad(buf, cfg.get_double("vad_frame_ms", 25.0),
                         cfg.get_double("vad_hop_ms", 10.0),
                         cfg.get_double("vad_threshold_db", -35.0),
                         cfg.get_double("vad_min_segment_ms", 1000.0),
                         cfg.get_double("vad_hangover_ms", 30.0));
  for (auto& [s, e] : segs) std::printf("%.3f\t%.3f\n", s, e);
  std::printf("vad: %zu segments\n", segs.size());
  return 0;
}

int cmd_fbank(const CommonArgs& common, const std::string& manifest_path,
              const std::string& out, bool apply_cmvn) {
  KvConfig cfg = common.resolve();
  echo_config(cfg);
  FeatureConfig fc = feature_config_from(cfg);
  Manifest m = load_manifest(manifest_path, Split::pretrain);
  FeatureCacheWriter writer(out);
  int written = 0;
  for (const auto& u : m.utterances) {
    if (writer.has(u.id)) continue;
    FeatureMatrix f = fbank(read_wav(u.audio_path), fc);
    if (apply_cmvn) f = cmvn(f);
    writer.add(u.id, f);
    ++written;
  }
  std::printf("fbank: wrote %d records to %s\n", written, out.c_str());
  return 0;
}

// Shared by kmeans and extract-labels: a per-utterance feature function
// for a spectral kind or an encoder checkpoint + selector.
std::function<FeatureMatrix(const Utterance&)> make_feature_fn(
    const std::string& source, const std::string& ckpt_path, int selector,
    const FeatureConfig& fc, std::shared_ptr<EncoderModel>* keep_alive) {
  if (source == "fbank") {
    return [fc](const Utterance& u) {
      return cmvn(fbank(read_wav(u.audio_path), fc));
    };
  }
  if (source == "mfcc") {
    return [fc](const Utterance& u) {
      return cmvn(mfcc(fbank(read_wav(u.audio_path), fc), fc.n_mfcc));
    };
  }
  if (source != "encoder")
    throw ConfigError("source must be fbank, mfcc or encoder");
  if (ckpt_path.empty()) throw ConfigError("encoder source requires --ckpt");
  auto enc = std::make_shared<EncoderModel>();
  ArtifactInfo info = inspect_artifact(ckpt_path);
  if (info.header.value("config", json::object()).value("type", "") ==
      "transducer")
    *enc = load_transducer_checkpoint(ckpt_path).encoder;
  else
    *enc = load_encoder_checkpoint(ckpt_path);
  *keep_alive = enc;
  return [enc, fc, selector](const Utterance& u) {
    return extract_features(*enc, cmvn(fbank(read_wav(u.audio_path), fc)),
                            selector);
  };
}

int parse_selector(const std::string& s) {
  if (s == "final") return static_cast<int>(FeatureSelector::final_output);
  if (s.rfind("stack", 0) == 0) return std::stoi(s.substr(5));
  throw ConfigError("selector must be 'final' or 'stackN' (0-based)");
}

int cmd_kmeans(const CommonArgs& common, const std::string& manifest_path,
               const std::string& source, const std::string& ckpt,
               const std::string& selector, int k, const std::string& out) {
  KvConfig cfg = common.resolve();
  echo_config(cfg);
  FeatureConfig fc = feature_config_from(cfg);
  Manifest m = load_manifest(manifest_path, Split::pretrain);
  std::shared_ptr<EncoderModel> keep;
  auto fn = make_feature_fn(source, ckpt, parse_selector(selector), fc, &keep);

  std::vector<double> sample;
  int dim = -1;
  double rate = 0;
  int64_t total = 0;
  auto max_frames = cfg.get_int("kmeans_max_frames", 2000000);
  for (const auto& u : m.utterances) {
    FeatureMatrix f = fn(u);
    if (dim < 0) {
      dim = f.dim();
      rate = f.frame_rate;
    }
    total += f.frames();
    sample.insert(sample.end(), f.m.v.begin(), f.m.v.end());
    if (total >= max_frames) break;
  }
  if (total == 0) throw DataError("kmeans: no frames collected");
  Codebook cb = kmeans_fit(sample, static_cast<int>(total), dim, k,
                           static_cast<int>(cfg.get_int("kmeans_iters", 25)),
                           static_cast<uint64_t>(cfg.get_int("seed", 1)));
  cb.feature_kind = source == "fbank"   ? FeatureKind::fbank
                    : source == "mfcc" ? FeatureKind::mfcc
                                       : FeatureKind::latent;
  cb.frame_rate = rate;
  save_codebook(cb, out);
  std::printf("kmeans: k=%d dim=%d frames=%lld iters=%d inertia=%.6g -> %s\n",
              cb.k, cb.dim, static_cast<long long>(total), cb.meta.iters_run,
              cb.meta.inertia, out.c_str());
  for (size_t i = 0; i < cb.meta.inertia_history.size(); ++i)
    std::printf("  lloyd iter %zu inertia %.6g\n", i,
                cb.meta.inertia_history[i]);
  return 0;
}

int cmd_extract_labels(const CommonArgs& common,
                       const std::string& manifest_path,
                       const std::string& codebook_path,
                       const std::string& source, const std::string& ckpt,
                       const std::string& selector, const std::string& out) {
  KvConfig cfg = common.resolve();
  echo_config(cfg);
  FeatureConfig fc = feature_config_from(cfg);
  Manifest m = load_manifest(manifest_path, Split::pretrain);
  Codebook cb = load_codebook(codebook_path);
  std::shared_ptr<EncoderModel> keep;
  auto fn = make_feature_fn(source, ckpt, parse_selector(selector), fc, &keep);
  LabelStore store = LabelStore::open(out);
  auto report = extract_labels_for_corpus(fn, m, cb, &store);
  std::printf("extract-labels: wrote %d, skipped %d existing, %zu failed -> %s\n",
              report.written, report.skipped_existing,
              report.failed_ids.size(), out.c_str());
  return report.failed_ids.empty() ? 0 : 1;
}

int cmd_pretrain(const CommonArgs& common, const std::string& labels_path,
                 const std::string& out) {
  KvConfig cfg = common.resolve();
  echo_config(cfg);
  require_workdir(cfg);
  PipelineOptions opts = options_from_config(cfg);
  Manifest pre = load_manifest(opts.pretrain_manifest, Split::pretrain);
  FeatureSet feats = FeatureSet::build(pre, opts.features);
  LabelStore labels = LabelStore::open(labels_path);

  EncoderModel enc =
      init_encoder(opts.encoder, derive_seed(opts.seed, "cli/pretrain/enc"));
  PretrainModel head = init_pretrain_model(
      opts.kmeans_k, opts.encoder.output_dim(), opts.encoder.n_mels, opts.tau,
      derive_seed(opts.seed, "cli/pretrain/head"));
  TrainConfig tc;
  tc.epochs = opts.iterations[0].pretrain_epochs;
  tc.lr = opts.pretrain_lr;
  tc.warmup_steps = opts.warmup_steps;
  tc.batch_frames = opts.batch_frames;
  tc.grad_clip = opts.grad_clip;
  tc.seed = derive_seed(opts.seed, "cli/pretrain/train");
  tc.verbose = true;
  StreamingSampler sampler = StreamingSampler::standard_grid();
  auto metrics =
      pretrain_run(&enc, &head, pre, feats, labels, opts.mask, tc,
                   opts.encoder.causal ? &sampler : nullptr,
                   [&](int) { save_encoder_checkpoint(enc, &head, out); });
  for (size_t e = 0; e < metrics.epochs.size(); ++e)
    std::printf("pretrain epoch %zu: loss %.4f masked-acc %.3f\n", e,
                metrics.epochs[e].loss, metrics.epochs[e].masked_accuracy);
  std::printf("pretrain: checkpoint -> %s\n", out.c_str());
  return 0;
}

int cmd_finetune(const CommonArgs& common, const std::string& init_ckpt,
                 const std::string& bpe_path, const std::string& out) {
  KvConfig cfg = common.resolve();
  echo_config(cfg);
  std::string wd = require_workdir(cfg);
  PipelineOptions opts = options_from_config(cfg);
  Manifest ft = load_manifest(opts.finetune_manifest, Split::finetune);
  FeatureSet feats = FeatureSet::build(ft, opts.features);

  BpeModel bpe;
  if (!bpe_path.empty()) {
    bpe = load_bpe(bpe_path);
  } else {
    std::vector<std::string> texts;
    for (const auto& u : ft.utterances)
      if (u.text) texts.push_back(*u.text);
    bpe = bpe_train(texts, opts.vocab_size);
    save_bpe(bpe, wd + "/bpe.json");
  }

  EncoderModel enc =
      init_ckpt.empty()
          ? init_encoder(opts.encoder, derive_seed(opts.seed, "cli/ft/enc"))
          : load_encoder_checkpoint(init_ckpt);
  TransducerModel model =
      init_transducer(enc, opts.predictor, opts.joiner, bpe.vocab_size(),
                      derive_seed(opts.seed, "cli/ft/head"));
  TrainConfig tc;
  tc.epochs = opts.iterations[0].finetune_epochs;
  tc.lr = opts.finetune_lr;
  tc.warmup_steps = opts.warmup_steps;
  tc.batch_frames = opts.batch_frames;
  tc.grad_clip = opts.grad_clip;
  tc.seed = derive_seed(opts.seed, "cli/ft/train");
  tc.verbose = true;
  StreamingSampler sampler = StreamingSampler::standard_grid();
  auto metrics = finetune_run(&model, ft, feats, bpe, tc,
                              opts.encoder.causal ? &sampler : nullptr);
  save_transducer_checkpoint(model, out);
  for (size_t e = 0; e < metrics.epochs.size(); ++e)
    std::printf("finetune epoch %zu: loss/token %.4f\n", e,
                metrics.epochs[e].loss);
  std::printf("finetune: checkpoint -> %s\n", out.c_str());
  return 0;
}

int cmd_decode(const CommonArgs& common, const std::string& ckpt,
               const std::string& manifest_path, const std::string& bpe_path,
               int beam, const std::string& out, bool streaming) {
  KvConfig cfg = common.resolve();
  echo_config(cfg);
  FeatureConfig fc = feature_config_from(cfg);
  TransducerModel model = load_transducer_checkpoint(ckpt);
  BpeModel bpe = load_bpe(bpe_path);
  Manifest m = load_manifest(manifest_path, Split::test);
  FeatureSet feats = FeatureSet::build(m, fc);
  PlanSpec plan;
  if (streaming || model.encoder.config.causal) {
    plan.chunk_s = cfg.get_double("decode_chunk_s", 0.64);
    plan.left_context_s = cfg.get_double("decode_context_s", 5.12);
  }
  std::map<std::string, double> scores;
  auto hyps = decode_corpus(
      model, m, feats, bpe, plan, beam,
      static_cast<int>(cfg.get_int("max_symbols_per_frame", 5)), &scores);
  std::string lines;
  for (const auto& [id, hyp] : hyps) {
    json j = {{"id", id}, {"hyp", hyp}, {"score", scores[id]}};
    lines += j.dump() + "\n";
  }
  write_text_file(out, lines);
  std::printf("decode: %zu hypotheses -> %s\n", hyps.size(), out.c_str());
  return 0;
}

int cmd_evaluate(const CommonArgs& common,
                 const std::vector<std::string>& ref_specs,
                 const std::string& hyps_path) {
  KvConfig cfg = common.resolve();
  echo_config(cfg);
  std::map<std::string, std::string> hyps;
  {
    std::istringstream in(read_text_file(hyps_path));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      hyps[j.at("id").get<std::string>()] = j.at("hyp").get<std::string>();
    }
  }
  std::vector<std::pair<std::string, Manifest>> sets;
  for (const auto& spec : ref_specs) {
    auto eq = spec.find('=');
    std::string name = eq == std::string::npos ? "test" : spec.substr(0, eq);
    std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    sets.emplace_back(name, load_manifest(path, Split::test));
  }
  WerReport report = wer(sets, hyps);
  std::printf("%s", format_wer_table(report).c_str());
  return 0;
}

int cmd_pipeline(const CommonArgs& common, int iterations) {
  KvConfig cfg = common.resolve();
  echo_config(cfg);
  PipelineOptions opts = options_from_config(cfg);
  Pipeline pipe(opts);
  json report = pipe.run(iterations > 0
                             ? iterations
                             : static_cast<int>(opts.iterations.size()));
  std::printf("%s", read_text_file(opts.workdir + "/report.txt").c_str());
  return 0;
}

int cmd_streaming_pipeline(const CommonArgs& common,
                           const std::string& labels, const std::string& tag) {
  KvConfig cfg = common.resolve();
  cfg.set("causal", "true");
  echo_config(cfg);
  PipelineOptions opts = options_from_config(cfg);
  Pipeline pipe(opts);
  json report = pipe.run_streaming(labels, tag);
  std::printf("streaming '%s': weighted WER %.2f%%\n", tag.c_str(),
              100.0 * report["wer"]["weighted_avg"].get<double>());
  return 0;
}

int cmd_inspect(const std::string& path) {
  ArtifactInfo info = inspect_artifact(path);
  std::printf("kind: %s\nversion: %d\n", info.kind.c_str(), info.version);
  std::printf("%s\n", info.header.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised ASR pipeline toolkit"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string wav, manifest, out, ckpt, source = "fbank", selector = "final";
  std::string codebook, bpe_path, labels, hyps_path, tag = "run";
  std::vector<std::string> refs;
  int k = 8, beam = 4, iterations = 0;
  bool apply_cmvn = false, streaming = false;

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic corpus");
  add_common(synth, &common);

  auto* vad = app.add_subcommand("vad", "energy-based segmentation of a wav");
  add_common(vad, &common);
  vad->add_option("--wav", wav, "input wav")->required();

  auto* fb = app.add_subcommand("fbank", "write a feature cache for a manifest");
  add_common(fb, &common);
  fb->add_option("--manifest", manifest)->required();
  fb->add_option("--out", out)->required();
  fb->add_flag("--cmvn", apply_cmvn, "normalize per utterance");

  auto* km = app.add_subcommand("kmeans", "fit a codebook");
  add_common(km, &common);
  km->add_option("--manifest", manifest)->required();
  km->add_option("--source", source, "fbank | mfcc | encoder");
  km->add_option("--ckpt", ckpt, "encoder/transducer checkpoint for --source encoder");
  km->add_option("--selector", selector, "final | stackN (0-based)");
  km->add_option("--k", k, "number of clusters");
  km->add_option("--out", out)->required();

  auto* ex = app.add_subcommand("extract-labels", "assign codebook labels");
  add_common(ex, &common);
  ex->add_option("--manifest", manifest)->required();
  ex->add_option("--codebook", codebook)->required();
  ex->add_option("--source", source, "fbank | mfcc | encoder");
  ex->add_option("--ckpt", ckpt);
  ex->add_option("--selector", selector);
  ex->add_option("--out", out)->required();

  auto* pre = app.add_subcommand("pretrain", "masked-prediction pre-training");
  add_common(pre, &common);
  pre->add_option("--labels", labels)->required();
  pre->add_option("--out", out)->required();

  auto* ft = app.add_subcommand("finetune", "transducer fine-tuning");
  add_common(ft, &common);
  ft->add_option("--init", ckpt, "encoder checkpoint to start from");
  ft->add_option("--bpe", bpe_path, "existing BPE model (else trained)");
  ft->add_option("--out", out)->required();

  auto* dec = app.add_subcommand("decode", "decode a manifest to JSONL");
  add_common(dec, &common);
  dec->add_option("--ckpt", ckpt)->required();
  dec->add_option("--manifest", manifest)->required();
  dec->add_option("--bpe", bpe_path)->required();
  dec->add_option("--beam", beam);
  dec->add_option("--out", out)->required();
  dec->add_flag("--streaming", streaming, "decode with the chunked plan");

  auto* ev = app.add_subcommand("evaluate", "score hypotheses against references");
  add_common(ev, &common);
  ev->add_option("--refs", refs, "name=manifest (repeatable)")->required();
  ev->add_option("--hyps", hyps_path)->required();

  auto* pl = app.add_subcommand("pipeline", "run the full multi-iteration flow");
  add_common(pl, &common);
  pl->add_option("--iterations", iterations, "override iteration count");

  auto* spl = app.add_subcommand("streaming-pipeline",
                                 "causal pre-train + fine-tune variant");
  add_common(spl, &common);
  spl->add_option("--labels", labels, "label store (empty: from-scratch baseline)");
  spl->add_option("--tag", tag, "run tag for workdir subpaths");

  std::string inspect_path;
  auto* ins = app.add_subcommand("inspect", "print an artifact header");
  ins->add_option("path", inspect_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth_data(common);
    if (vad->parsed()) return cmd_vad(common, wav);
    if (fb->parsed()) return cmd_fbank(common, manifest, out, apply_cmvn);
    if (km->parsed())
      return cmd_kmeans(common, manifest, source, ckpt, selector, k, out);
    if (ex->parsed())
      return cmd_extract_labels(common, manifest, codebook, source, ckpt,
                                selector, out);
    if (pre->parsed()) return cmd_pretrain(common, labels, out);
    if (ft->parsed()) return cmd_finetune(common, ckpt, bpe_path, out);
    if (dec->parsed())
      return cmd_decode(common, ckpt, manifest, bpe_path, beam, out, streaming);
    if (ev->parsed()) return cmd_evaluate(common, refs, hyps_path);
    if (pl->parsed()) return cmd_pipeline(common, iterations);
    if (spl->parsed()) return cmd_streaming_pipeline(common, labels, tag);
    if (ins->parsed()) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: runtime: %s\n", e.what());
    return 1;
  }
  return 2;
}
