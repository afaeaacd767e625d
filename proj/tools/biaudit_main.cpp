// tools/biaudit_main.cpp

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

// Command-line front end. Every sub-command reads and writes the documented
// file formats; `pipeline` chains them end to end.
//
// Examples:
//   biaudit --print-config > run.cfg
//   biaudit --config run.cfg pipeline --out-dir run1
//   biaudit gen-data --out-dir data
//   biaudit finetune --corpus data/train.crp --variant M_sga --out m.ckpt

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "biaudit/analysis.hpp"
#include "biaudit/attacks.hpp"
#include "biaudit/checkpoint.hpp"
#include "biaudit/corpus.hpp"
#include "biaudit/embedding_io.hpp"
#include "biaudit/error.hpp"
#include "biaudit/fairness.hpp"
#include "biaudit/finetune.hpp"
#include "biaudit/metrics.hpp"
#include "biaudit/pipeline.hpp"
#include "biaudit/pretrain.hpp"
#include "biaudit/rng.hpp"

namespace {

using namespace biaudit;
namespace fs = std::filesystem;

struct Options {
  RunConfig run;
  std::string lambda_override = "none";
  std::string epsilon = "none";
  std::string fad_normalization = "pair-max";
};

std::optional<double> ParseOptionalReal(const std::string& text, const char* what) {
  if (text == "none" || text.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(what) + ": expected a number or 'none', got '" + text + "'");
}

void BindRunConfig(CLI::App& app, Options& o) {
  RunConfig& c = o.run;
  app.add_option("--master-seed", c.master_seed, "Master seed for every stage")->capture_default_str();
  app.add_option("--n-speakers", c.corpus.n_speakers, "Fine-tuning speakers")->capture_default_str();
  app.add_option("--utts-per-speaker", c.corpus.utts_per_speaker)->capture_default_str();
  app.add_option("--frames-per-utt", c.corpus.frames_per_utt)->capture_default_str();
  app.add_option("--frame-dim", c.corpus.frame_dim)->capture_default_str();
  app.add_option("--gender-dims", c.corpus.gender_dims)->capture_default_str();
  app.add_option("--gender-offset", c.corpus.gender_offset, "Gender offset magnitude")
      ->capture_default_str();
  app.add_option("--gender-balance", c.corpus.gender_balance, "Male fraction of the fine-tuning corpus")
      ->capture_default_str();
  app.add_option("--speaker-spread", c.corpus.speaker_spread)->capture_default_str();
  app.add_option("--utterance-noise", c.corpus.utterance_noise)->capture_default_str();
  app.add_option("--frame-noise", c.corpus.frame_noise)->capture_default_str();
  app.add_option("--eval-speakers", c.eval_speakers)->capture_default_str();
  app.add_option("--eval-utts-per-speaker", c.eval_utts_per_speaker)->capture_default_str();
  app.add_option("--eval-gender-balance", c.eval_gender_balance)->capture_default_str();
  app.add_option("--attack-speakers", c.attack_speakers)->capture_default_str();
  app.add_option("--pretrain", c.pretrain, "Run the pre-training simulation first")
      ->capture_default_str();
  app.add_option("--pretrain-steps", c.pretrain_steps)->capture_default_str();
  app.add_option("--hidden", c.model.hidden)->capture_default_str();
  app.add_option("--depth", c.model.depth)->capture_default_str();
  app.add_option("--warmup-steps", c.finetune.warmup_steps)->capture_default_str();
  app.add_option("--total-steps", c.finetune.total_steps)->capture_default_str();
  app.add_option("--batch-size", c.finetune.batch_size)->capture_default_str();
  app.add_option("--learning-rate", c.finetune.learning_rate)->capture_default_str();
  app.add_option("--momentum", c.finetune.momentum)->capture_default_str();
  app.add_option("--grl-scale", c.finetune.grl_scale)->capture_default_str();
  app.add_option("--aam-scale", c.finetune.aam.scale)->capture_default_str();
  app.add_option("--aam-margin", c.finetune.aam.margin)->capture_default_str();
  app.add_option("--lambda-override", o.lambda_override, "Lambda for every variant, or none")
      ->capture_default_str();
  app.add_option("--n-target-trials", c.n_target_trials)->capture_default_str();
  app.add_option("--n-nontarget-trials", c.n_nontarget_trials)->capture_default_str();
  app.add_option("--far-low", c.fdr.far_low)->capture_default_str();
  app.add_option("--far-high", c.fdr.far_high)->capture_default_str();
  app.add_option("--fdr-grid-points", c.fdr.grid_points)->capture_default_str();
  app.add_option("--fdr-epsilon", o.epsilon, "Reported only")->capture_default_str();
  app.add_option("--fdr-alphas", c.fdr_alphas)->capture_default_str()->delimiter(',');
  app.add_option("--fdr-plot-alpha", c.fdr_plot_alpha)->capture_default_str();
  app.add_option("--fad-normalization", o.fad_normalization)
      ->check(CLI::IsMember({"pair-max", "layer-max-across-models"}))
      ->capture_default_str();
  app.add_option("--attacker-hidden", c.attacker.hidden_units)->capture_default_str();
  app.add_option("--attacker-epochs", c.attacker.epochs)->capture_default_str();
  app.add_option("--attacker-batch", c.attacker.batch_size)->capture_default_str();
  app.add_option("--attacker-lr", c.attacker.learning_rate)->capture_default_str();
  app.add_option("--attacker-momentum", c.attacker.momentum)->capture_default_str();
  app.add_option("--attacker-validation", c.attacker.validation_fraction)->capture_default_str();
}

void Finalize(Options& o) {
  o.run.finetune.lambda_override = ParseOptionalReal(o.lambda_override, "lambda-override");
  o.run.fdr.epsilon = ParseOptionalReal(o.epsilon, "fdr-epsilon");
  o.run.fad_normalization = o.fad_normalization == "pair-max"
                                ? FadNormalization::kPairMax
                                : FadNormalization::kLayerMaxAcrossModels;
}

void Log(const std::string& msg) { std::cerr << "biaudit: " << msg << '\n'; }

CorpusConfig EvalCorpusConfig(const RunConfig& c, std::size_t speakers, const char* prefix) {
  CorpusConfig ec = c.corpus;
  ec.n_speakers = speakers;
  ec.utts_per_speaker = c.eval_utts_per_speaker;
  ec.gender_balance = c.eval_gender_balance;
  ec.id_prefix = prefix;
  return ec;
}

void PrintUtility(const ScoreSet& scores) {
  const auto overall = Eer(Roc(scores));
  std::cout << "eer_overall " << FormatReal(overall.eer) << " tau " << FormatReal(overall.tau) << '\n';
  for (GroupLabel g : kAllGroups) {
    const auto sub = SubsetByGroup(scores, g);
    std::cout << "eer_" << GroupName(g) << ' ' << FormatReal(Eer(Roc(sub)).eer) << '\n';
  }
  std::cout << "auc " << FormatReal(Auc(scores)) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gender fairness and privacy audit for speaker-verification models"};
  app.require_subcommand(0, 1);
  app.set_config("--config", "", "Read key=value configuration from a file");
  Options opt;
  BindRunConfig(app, opt);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print the full configuration and exit")
      ->configurable(false);

  std::string out_dir = "biaudit_run", out_path, corpus_path, model_path, emb_path, trials_path,
              scores_path, train_path, test_path, roc_path, pretrained_path, variant_name = "M_s";
  double alpha = 0.5;
  std::size_t components = 2;

  auto* gen = app.add_subcommand("gen-data", "Generate fine-tuning, evaluation and attacker corpora");
  gen->add_option("--out-dir", out_dir)->capture_default_str();

  auto* pre = app.add_subcommand("pretrain", "Run the masked contrastive pre-training simulation");
  pre->add_option("--out", out_path, "Checkpoint path")->required();

  auto* ft = app.add_subcommand("finetune", "Fine-tune one variant on a corpus");
  ft->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  ft->add_option("--variant", variant_name)->check(CLI::IsMember({"M_s", "M_sg", "M_sga"}))
      ->capture_default_str();
  ft->add_option("--pretrained", pretrained_path, "Pre-trained checkpoint for the backbone")
      ->check(CLI::ExistingFile);
  ft->add_option("--out", out_path)->required();

  auto* emb = app.add_subcommand("embed", "Extract utterance embeddings");
  emb->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  emb->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  emb->add_option("--out", out_path)->required();

  auto* tri = app.add_subcommand("trials", "Draw verification trials");
  tri->add_option("--embeddings", emb_path)->required()->check(CLI::ExistingFile);
  tri->add_option("--out", out_path)->required();

  auto* sc = app.add_subcommand("score", "Cosine-score trials");
  sc->add_option("--embeddings", emb_path)->required()->check(CLI::ExistingFile);
  sc->add_option("--trials", trials_path)->required()->check(CLI::ExistingFile);
  sc->add_option("--out", out_path)->required();

  auto* ut = app.add_subcommand("eval-utility", "EER overall and per gender");
  ut->add_option("--scores", scores_path)->required()->check(CLI::ExistingFile);
  ut->add_option("--roc", roc_path, "Optional ROC CSV output");

  auto* fa = app.add_subcommand("eval-fairness", "FDR curve and auFDR");
  fa->add_option("--scores", scores_path)->required()->check(CLI::ExistingFile);
  fa->add_option("--alpha", alpha)->capture_default_str();
  fa->add_option("--out", out_path, "FDR curve CSV");

  auto* fad = app.add_subcommand("eval-fad", "Per-layer activation discrepancy");
  fad->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  fad->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  fad->add_option("--out", out_path);

  auto* at = app.add_subcommand("attack", "Train a gender attacker and report its AUC");
  at->add_option("--train", train_path)->required()->check(CLI::ExistingFile);
  at->add_option("--test", test_path)->required()->check(CLI::ExistingFile);

  auto* pc = app.add_subcommand("pca", "Project embeddings on leading principal components");
  pc->add_option("--embeddings", emb_path)->required()->check(CLI::ExistingFile);
  pc->add_option("--components", components)->capture_default_str();
  pc->add_option("--out", out_path);

  auto* rep = app.add_subcommand("report", "Rebuild the report bundle from a pipeline run");
  rep->add_option("--run-dir", out_dir)->required()->check(CLI::ExistingDirectory);

  auto* pipe = app.add_subcommand("pipeline", "Run every stage end to end");
  pipe->add_option("--out-dir", out_dir)->capture_default_str();

  // Only run settings belong in a configuration file; file arguments do not.
  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; }))
    for (auto* o : sub->get_options()) o->configurable(false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return ExitCodeFor(ErrorKind::kConfig);
  }

  if (print_config) {
    std::cout << app.config_to_str(true, true);
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return 0;
  }

  try {
    Finalize(opt);
    RunConfig& cfg = opt.run;
    cfg.Validate();
    const StageSeeds seeds = SeedsFor(cfg.master_seed);

    if (*gen) {
      fs::create_directories(out_dir);
      const Corpus train = GenerateCorpus(cfg.corpus, seeds.gen_train);
      SaveCorpus(train, fs::path(out_dir) / "train.crp");
      SaveCorpus(GenerateCorpus(EvalCorpusConfig(cfg, cfg.eval_speakers, "evl"), seeds.gen_eval),
                 fs::path(out_dir) / "eval.crp");
      SaveCorpus(
          GenerateCorpus(EvalCorpusConfig(cfg, cfg.attack_speakers, "atk"), seeds.gen_attack),
          fs::path(out_dir) / "attack.crp");
      std::cout << "utterances " << train.utterances.size() << " male_fraction "
                << FormatReal(static_cast<double>(train.CountGroup(GroupLabel::kMale)) /
                              static_cast<double>(train.utterances.size()))
                << '\n';
    } else if (*pre) {
      PretrainDims pd;
      pd.frame_dim = cfg.corpus.frame_dim;
      pd.hidden = cfg.model.hidden;
      pd.latent_dim = cfg.model.hidden;
      PretrainConfig pcfg;
      PretrainModel model = BuildPretrainModel(pd, pcfg.loss, seeds.pretrain);
      const auto seqs = GeneratePretrainSequences(cfg.pretrain_batch * 8,
                                                  cfg.pretrain_sequence_length, pd.frame_dim,
                                                  DeriveSeed(seeds.pretrain, "sequences"));
      for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
        const std::size_t start = (step * cfg.pretrain_batch) % seqs.size();
        std::vector<grad::Tensor> batch;
        for (std::size_t i = 0; i < cfg.pretrain_batch; ++i)
          batch.push_back(seqs[(start + i) % seqs.size()]);
        const auto r = PretrainStep(batch, model, pcfg, SplitMix64(seeds.pretrain + step));
        if (step % 50 == 0 || step + 1 == cfg.pretrain_steps)
          std::cout << "step " << step << " loss_m " << FormatReal(r.loss_m) << " loss_d "
                    << FormatReal(r.loss_d) << '\n';
      }
      SavePretrainModel(model, nlohmann::json{{"steps", cfg.pretrain_steps}}, seeds.pretrain,
                        cfg.pretrain_steps, out_path);
    } else if (*ft) {
      const Corpus corpus = LoadCorpus(corpus_path);
      const Variant v = *ParseVariant(variant_name);
      ModelDims dims = cfg.model;
      dims.frame_dim = corpus.frame_dim;
      dims.n_speakers = corpus.speakers.size();
      SpeakerModel m = BuildModel(v, dims, seeds.ModelInit(v));
      if (!pretrained_path.empty()) {
        const auto p = LoadPretrainModel(pretrained_path);
        Log("copied " + std::to_string(InitBackboneFromPretrain(m, p)) + " pre-trained layers");
      }
      FineTuneConfig fc = cfg.finetune;
      fc.variant = v;
      fc.seed = seeds.Finetune(v);
      m = FineTune(std::move(m), corpus, fc);
      SaveModel(m, fc.seed, fc.total_steps, out_path);
      std::cout << "speaker_train_accuracy " << FormatReal(m.log.speaker_train_accuracy)
                << " gender_train_accuracy " << FormatReal(m.log.gender_train_accuracy) << '\n';
    } else if (*emb) {
      SaveEmbeddings(ExtractEmbeddings(LoadModel(model_path), LoadCorpus(corpus_path)), out_path);
    } else if (*tri) {
      TrialOptions to;
      to.n_target = cfg.n_target_trials;
      to.n_nontarget = cfg.n_nontarget_trials;
      to.seed = seeds.trials;
      SaveTrials(MakeTrials(LoadEmbeddings(emb_path), to), out_path);
    } else if (*sc) {
      SaveScores(ScoreTrials(LoadEmbeddings(emb_path), LoadTrials(trials_path)), out_path);
    } else if (*ut) {
      const ScoreSet scores = LoadScores(scores_path);
      PrintUtility(scores);
      if (!roc_path.empty()) SaveRoc(Roc(scores), roc_path);
    } else if (*fa) {
      const ScoreSet scores = LoadScores(scores_path);
      FdrConfig fc = cfg.fdr;
      fc.alpha = alpha;
      const FdrCurve curve = ComputeFdrCurve(ScoresByGroup(scores), fc, scores);
      std::cout << "aufdr " << FormatReal(AuFdr(curve)) << " alpha " << FormatReal(alpha)
                << " far_range (" << FormatReal(fc.far_low) << ", " << FormatReal(fc.far_high)
                << "] points " << curve.size() << '\n';
      if (!out_path.empty()) {
        std::ostringstream os;
        WriteFdrCurve(curve, os);
        WriteFileBytes(out_path, os.str());
      }
    } else if (*fad) {
      const SpeakerModel m = LoadModel(model_path);
      const Corpus corpus = LoadCorpus(corpus_path);
      const auto rows = FadTable(ExtractLayerActivations(m, corpus, GroupLabel::kMale),
                                 ExtractLayerActivations(m, corpus, GroupLabel::kFemale));
      std::ostringstream os;
      WriteFadTable(rows, os);
      if (out_path.empty())
        std::cout << os.str();
      else
        WriteFileBytes(out_path, os.str());
    } else if (*at) {
      AttackerConfig ac = cfg.attacker;
      ac.seed = seeds.attack;
      const auto net = TrainAttacker(LoadEmbeddings(train_path), ac);
      std::cout << "validation_auc " << FormatReal(net.validation_auc) << " auc "
                << FormatReal(EvaluateAttack(net, LoadEmbeddings(test_path))) << '\n';
    } else if (*pc) {
      const EmbeddingSet set = LoadEmbeddings(emb_path);
      const PcaModel model = PcaFit(set, components);
      std::ostringstream os;
      WritePcaCsv(PcaProject(model, set), os);
      if (out_path.empty())
        std::cout << os.str();
      else
        WriteFileBytes(out_path, os.str());
      for (std::size_t i = 0; i < model.eigenvalues.size(); ++i)
        std::cerr << "eigenvalue " << i + 1 << ' ' << FormatReal(model.eigenvalues[i]) << '\n';
    } else if (*rep) {
      cfg.output_dir = out_dir;
      const auto r = ReportFromRun(cfg, [](const std::string& s) { Log("stage " + s); });
      std::cout << (r.bundle.directory / "manifest.json").string() << '\n';
    } else if (*pipe) {
      cfg.output_dir = out_dir;
      const auto r = RunPipeline(cfg, [](const std::string& s) { Log("stage " + s); });
      std::cout << (r.bundle.directory / "manifest.json").string() << '\n';
    }
  } catch (const Error& e) {
    Log(std::string("error: ") + e.what());
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    Log(std::string("error: ") + e.what());
    return 1;
  }
  return 0;
}
