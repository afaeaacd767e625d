// src/pipeline.cpp

// Copyright 2026  The biaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "biaudit/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "biaudit/checkpoint.hpp"
#include "biaudit/embedding_io.hpp"
#include "biaudit/metrics.hpp"
#include "biaudit/pretrain.hpp"
#include "biaudit/rng.hpp"

namespace biaudit {

void RunConfig::Validate() const {
  if (!(corpus.gender_balance > 0.0 && corpus.gender_balance < 1.0))
    throw ConfigError("gender_balance must lie in (0, 1)");
  if (!(eval_gender_balance > 0.0 && eval_gender_balance < 1.0))
    throw ConfigError("eval_gender_balance must lie in (0, 1)");
  if (corpus.n_speakers < 4 || eval_speakers < 4 || attack_speakers < 4)
    throw ConfigError("need at least 4 speakers per corpus");
  if (corpus.utts_per_speaker < 2 || eval_utts_per_speaker < 2)
    throw ConfigError("need at least 2 utterances per speaker");
  if (corpus.frames_per_utt < 1 || corpus.frame_dim < 1)
    throw ConfigError("frame sizes must be positive");
  if (corpus.gender_dims > corpus.frame_dim)
    throw ConfigError("gender_dims exceeds frame_dim");
  if (model.hidden < 1 || model.depth < 1) throw ConfigError("model sizes must be positive");
  if (finetune.warmup_steps > finetune.total_steps)
    throw ConfigError("warmup_steps must not exceed total_steps");
  if (finetune.lambda_override &&
      !(*finetune.lambda_override >= 0.0 && *finetune.lambda_override <= 1.0))
    throw ConfigError("lambda override must lie in [0, 1]");
  if (fdr_alphas.empty()) throw ConfigError("need at least one FDR alpha");
  for (double a : fdr_alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("FDR alphas must lie in [0, 1]");
  fdr.Validate();
  attacker.Validate();
}

nlohmann::json RunConfig::ToJson() const {
  nlohmann::json j;
  j["master_seed"] = master_seed;
  j["corpus"] = {{"n_speakers", corpus.n_speakers},
                 {"utts_per_speaker", corpus.utts_per_speaker},
                 {"frames_per_utt", corpus.frames_per_utt},
                 {"frame_dim", corpus.frame_dim},
                 {"gender_dims", corpus.gender_dims},
                 {"gender_offset", corpus.gender_offset},
                 {"gender_balance", corpus.gender_balance},
                 {"speaker_spread", corpus.speaker_spread},
                 {"utterance_noise", corpus.utterance_noise},
                 {"frame_noise", corpus.frame_noise},
                 {"eval_speakers", eval_speakers},
                 {"eval_utts_per_speaker", eval_utts_per_speaker},
                 {"eval_gender_balance", eval_gender_balance},
                 {"attack_speakers", attack_speakers}};
  j["pretrain"] = {{"enabled", pretrain},
                   {"steps", pretrain_steps},
                   {"batch", pretrain_batch},
                   {"sequence_length", pretrain_sequence_length}};
  j["model"] = {{"hidden", model.hidden}, {"depth", model.depth}};
  j["finetune"] = {{"warmup_steps", finetune.warmup_steps},
                   {"total_steps", finetune.total_steps},
                   {"batch_size", finetune.batch_size},
                   {"learning_rate", finetune.learning_rate},
                   {"momentum", finetune.momentum},
                   {"grl_scale", finetune.grl_scale},
                   {"aam_scale", finetune.aam.scale},
                   {"aam_margin", finetune.aam.margin},
                   {"lambda_override", finetune.lambda_override
                                           ? nlohmann::json(*finetune.lambda_override)
                                           : nlohmann::json(nullptr)}};
  j["trials"] = {{"n_target", n_target_trials}, {"n_nontarget", n_nontarget_trials}};
  j["fairness"] = {{"far_low", fdr.far_low},
                   {"far_high", fdr.far_high},
                   {"grid_points", fdr.grid_points},
                   {"epsilon", fdr.epsilon ? nlohmann::json(*fdr.epsilon) : nlohmann::json(nullptr)},
                   {"alphas", fdr_alphas},
                   {"plot_alpha", fdr_plot_alpha},
                   {"fad_normalization",
                    fad_normalization == FadNormalization::kPairMax ? "pair-max"
                                                                    : "layer-max-across-models"}};
  j["attacker"] = {{"hidden_units", attacker.hidden_units},
                   {"epochs", attacker.epochs},
                   {"batch_size", attacker.batch_size},
                   {"learning_rate", attacker.learning_rate},
                   {"momentum", attacker.momentum},
                   {"validation_fraction", attacker.validation_fraction}};
  return j;
}

std::string RunConfig::Hash() const { return HexDigest(Fnv1a64(ToJson().dump())); }

StageSeeds SeedsFor(std::uint64_t master) {
  StageSeeds s{};
  s.master = master;
  s.gen_train = DeriveSeed(master, "gen-data/train");
  s.gen_eval = DeriveSeed(master, "gen-data/eval");
  s.gen_attack = DeriveSeed(master, "gen-data/attack");
  s.pretrain = DeriveSeed(master, "pretrain");
  s.trials = DeriveSeed(master, "trials");
  s.attack = DeriveSeed(master, "attack");
  return s;
}

std::uint64_t StageSeeds::ModelInit(Variant v) const {
  return DeriveSeed(master, "model-init/" + std::string(VariantName(v)));
}

std::uint64_t StageSeeds::Finetune(Variant v) const {
  return DeriveSeed(master, "finetune/" + std::string(VariantName(v)));
}

nlohmann::json StageSeeds::ToJson() const {
  nlohmann::json j = {{"master", master},         {"gen-data/train", gen_train},
                      {"gen-data/eval", gen_eval}, {"gen-data/attack", gen_attack},
                      {"pretrain", pretrain},
                      {"trials", trials},
                      {"attack", attack}};
  for (Variant v : kAllVariants) {
    j["model-init/" + std::string(VariantName(v))] = ModelInit(v);
    j["finetune/" + std::string(VariantName(v))] = Finetune(v);
  }
  return j;
}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kData: return 3;
    case ErrorKind::kDivergence: return 4;
    case ErrorKind::kEvaluation: return 5;
  }
  return 1;
}

std::size_t VariantThreadCap() {
  if (const char* env = std::getenv("BIAUDIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

template <typename F>
auto Stage(const std::string& name, const ProgressFn& progress, F&& body) {
  if (progress) progress(name);
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  } catch (const std::domain_error& e) {
    throw StageError(name, EvaluationError(e.what()));
  }
}

}  // namespace

namespace {

struct RunData {
  Corpus train, eval, attack_pool;
};

PipelineResult EvaluateRun(const RunConfig& cfg, const StageSeeds& seeds,
                           const std::string& run_hash, const RunData& data,
                           std::vector<SpeakerModel> models, const ProgressFn& progress) {
  const auto& out = cfg.output_dir;
  const Corpus& train = data.train;
  const Corpus& eval = data.eval;
  const Corpus& attack_pool = data.attack_pool;
  std::filesystem::create_directories(out / "embeddings");
  std::filesystem::create_directories(out / "scores");
  std::vector<EmbeddingSet> eval_emb, attack_emb;
  Stage("embed", progress, [&] {
    for (const auto& m : models) {
      eval_emb.push_back(ExtractEmbeddings(m, eval));
      attack_emb.push_back(ExtractEmbeddings(m, attack_pool));
      SaveEmbeddings(eval_emb.back(),
                     out / "embeddings" / (std::string(VariantName(m.variant)) + "_eval.emb"));
    }
    return 0;
  });

  TrialList trials = Stage("trials", progress, [&] {
    TrialOptions to;
    to.n_target = cfg.n_target_trials;
    to.n_nontarget = cfg.n_nontarget_trials;
    to.seed = seeds.trials;
    auto t = MakeTrials(eval_emb.front(), to);
    SaveTrials(t, out / "trials.csv");
    return t;
  });

  std::vector<ScoreSet> scores = Stage("score", progress, [&] {
    std::vector<ScoreSet> s;
    for (std::size_t i = 0; i < models.size(); ++i) {
      s.push_back(ScoreTrials(eval_emb[i], trials));
      SaveScores(s.back(), out / "scores" / (std::string(VariantName(models[i].variant)) + ".csv"));
    }
    return s;
  });

  ReportInputs report;
  report.run_hash = run_hash;
  report.threats_run_hash = run_hash;
  report.fdr = cfg.fdr;
  Stage("evaluate", progress, [&] {
    for (std::size_t i = 0; i < models.size(); ++i) {
      ModelReport mr;
      mr.name = std::string(VariantName(models[i].variant));
      mr.run_hash = run_hash;
      mr.config_hash = models[i].config_hash;
      mr.eer_overall = Eer(Roc(scores[i])).eer;
      mr.eer_male = Eer(Roc(SubsetByGroup(scores[i], GroupLabel::kMale))).eer;
      mr.eer_female = Eer(Roc(SubsetByGroup(scores[i], GroupLabel::kFemale))).eer;
      mr.speaker_train_accuracy = models[i].log.speaker_train_accuracy;
      mr.gender_head_accuracy = GenderAccuracy(models[i], eval);
      const GroupScores by_group = ScoresByGroup(scores[i]);
      for (double alpha : cfg.fdr_alphas) {
        FdrConfig fc = cfg.fdr;
        fc.alpha = alpha;
        mr.aufdr[alpha] = AuFdr(ComputeFdrCurve(by_group, fc, scores[i]));
      }
      FdrConfig plot = cfg.fdr;
      plot.alpha = cfg.fdr_plot_alpha;
      mr.fdr_curve = ComputeFdrCurve(by_group, plot, scores[i]);
      mr.pca = PcaProject(PcaFit(eval_emb[i], 2), eval_emb[i]);
      mr.fad = FadTable(ExtractLayerActivations(models[i], eval, GroupLabel::kMale),
                        ExtractLayerActivations(models[i], eval, GroupLabel::kFemale));
      report.models.push_back(std::move(mr));
    }
    if (cfg.fad_normalization == FadNormalization::kLayerMaxAcrossModels) {
      std::vector<std::vector<FadRow>*> tables;
      for (auto& m : report.models) tables.push_back(&m.fad);
      NormalizeAcrossModels(tables);
    }
    return 0;
  });

  Stage("attack", progress, [&] {
    AttackerConfig ac = cfg.attacker;
    ac.seed = seeds.attack;
    std::vector<AttackSource> src;
    for (std::size_t i = 0; i < models.size(); ++i)
      src.push_back({std::string(VariantName(models[i].variant)), attack_emb[i], eval_emb[i]});
    report.threats = RunThreatMatrix(src[0], src[1], src[2], ac);
    return 0;
  });

  PipelineResult result;
  result.run_hash = run_hash;
  report.extra = {{"config", cfg.ToJson()},
                  {"seeds", seeds.ToJson()},
                  {"stages", {"gen-data", cfg.pretrain ? "pretrain" : "pretrain (skipped)",
                              "finetune", "embed", "trials", "score", "evaluate", "attack",
                              "report"}},
                  {"corpus", {{"train_utterances", train.utterances.size()},
                              {"train_male_utterances", train.CountGroup(GroupLabel::kMale)},
                              {"eval_utterances", eval.utterances.size()},
                              {"eval_male_utterances", eval.CountGroup(GroupLabel::kMale)},
                              {"attack_utterances", attack_pool.utterances.size()}}},
                  {"trials", {{"target", cfg.n_target_trials},
                              {"nontarget", cfg.n_nontarget_trials}}}};
  nlohmann::json training = nlohmann::json::object();
  for (const auto& m : models)
    training[std::string(VariantName(m.variant))] = {
        {"final_loss_total", m.log.loss_total.empty() ? 0.0 : m.log.loss_total.back()},
        {"final_loss_speaker", m.log.loss_speaker.empty() ? 0.0 : m.log.loss_speaker.back()},
        {"final_loss_gender", m.log.loss_gender.empty() ? 0.0 : m.log.loss_gender.back()},
        {"gender_train_accuracy", m.log.gender_train_accuracy}};
  report.extra["training"] = training;
  result.bundle = Stage("report", progress, [&] { return BuildReport(report, out / "report"); });
  result.models = std::move(models);
  return result;
}

}  // namespace

PipelineResult RunPipeline(const RunConfig& cfg, const ProgressFn& progress) {
  Stage("config", progress, [&] { cfg.Validate(); return 0; });
  const StageSeeds seeds = SeedsFor(cfg.master_seed);
  const std::string run_hash = cfg.Hash();
  const auto& out = cfg.output_dir;
  std::filesystem::create_directories(out / "data");
  std::filesystem::create_directories(out / "models");

  Corpus train, eval, attack_pool;
  Stage("gen-data", progress, [&] {
    train = GenerateCorpus(cfg.corpus, seeds.gen_train);
    CorpusConfig ec = cfg.corpus;
    ec.n_speakers = cfg.eval_speakers;
    ec.utts_per_speaker = cfg.eval_utts_per_speaker;
    ec.gender_balance = cfg.eval_gender_balance;
    ec.id_prefix = "evl";
    eval = GenerateCorpus(ec, seeds.gen_eval);
    ec.n_speakers = cfg.attack_speakers;
    ec.id_prefix = "atk";
    attack_pool = GenerateCorpus(ec, seeds.gen_attack);
    SaveCorpus(train, out / "data" / "train.crp");
    SaveCorpus(eval, out / "data" / "eval.crp");
    SaveCorpus(attack_pool, out / "data" / "attack.crp");
    return 0;
  });

  ModelDims dims = cfg.model;
  dims.frame_dim = cfg.corpus.frame_dim;
  dims.n_speakers = train.speakers.size();

  std::optional<PretrainModel> pretrained;
  if (cfg.pretrain) {
    Stage("pretrain", progress, [&] {
      PretrainDims pd;
      pd.frame_dim = dims.frame_dim;
      pd.hidden = dims.hidden;
      pd.latent_dim = dims.hidden;
      PretrainConfig pc;
      pretrained = BuildPretrainModel(pd, pc.loss, seeds.pretrain);
      const auto seqs = GeneratePretrainSequences(cfg.pretrain_batch * 8,
                                                  cfg.pretrain_sequence_length, pd.frame_dim,
                                                  DeriveSeed(seeds.pretrain, "sequences"));
      for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
        const std::size_t start = (step * cfg.pretrain_batch) % seqs.size();
        std::vector<grad::Tensor> batch;
        for (std::size_t i = 0; i < cfg.pretrain_batch; ++i)
          batch.push_back(seqs[(start + i) % seqs.size()]);
        PretrainStep(batch, *pretrained, pc, SplitMix64(seeds.pretrain + step));
      }
      SavePretrainModel(*pretrained, nlohmann::json{{"steps", cfg.pretrain_steps}},
                        seeds.pretrain, cfg.pretrain_steps, out / "models" / "pretrain.ckpt");
      return 0;
    });
  }

  // Each variant starts from its own initialization, as independent runs do.
  std::vector<SpeakerModel> models(std::size(kAllVariants));
  Stage("finetune", progress, [&] {
    const std::size_t cap = std::min(VariantThreadCap(), models.size());
    std::vector<std::exception_ptr> failures(models.size());
    auto run_one = [&](std::size_t i) {
      try {
        const Variant v = kAllVariants[i];
        SpeakerModel m = BuildModel(v, dims, seeds.ModelInit(v));
        if (pretrained) InitBackboneFromPretrain(m, *pretrained);
        FineTuneConfig fc = cfg.finetune;
        fc.variant = v;
        fc.seed = seeds.Finetune(v);
        models[i] = FineTune(std::move(m), train, fc);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    };
    for (std::size_t begin = 0; begin < models.size(); begin += cap) {
      std::vector<std::thread> pool;
      const std::size_t end = std::min(models.size(), begin + cap);
      if (end - begin == 1) {
        run_one(begin);
        continue;
      }
      for (std::size_t i = begin; i < end; ++i) pool.emplace_back(run_one, i);
      for (auto& t : pool) t.join();
    }
    for (auto& f : failures)
      if (f) std::rethrow_exception(f);
    for (const auto& m : models)
      SaveModel(m, seeds.Finetune(m.variant), cfg.finetune.total_steps,
                out / "models" / (std::string(VariantName(m.variant)) + ".ckpt"));
    return 0;
  });

  RunData data{std::move(train), std::move(eval), std::move(attack_pool)};
  return EvaluateRun(cfg, seeds, run_hash, data, std::move(models), progress);
}

PipelineResult ReportFromRun(const RunConfig& cfg, const ProgressFn& progress) {
  Stage("config", progress, [&] { cfg.Validate(); return 0; });
  const StageSeeds seeds = SeedsFor(cfg.master_seed);
  const auto& out = cfg.output_dir;
  RunData data;
  std::vector<SpeakerModel> models;
  Stage("load", progress, [&] {
    data.train = LoadCorpus(out / "data" / "train.crp");
    data.eval = LoadCorpus(out / "data" / "eval.crp");
    data.attack_pool = LoadCorpus(out / "data" / "attack.crp");
    for (Variant v : kAllVariants)
      models.push_back(LoadModel(out / "models" / (std::string(VariantName(v)) + ".ckpt")));
    return 0;
  });
  return EvaluateRun(cfg, seeds, cfg.Hash(), data, std::move(models), progress);
}

}  // namespace biaudit
