// include/biaudit/pipeline.hpp

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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "biaudit/analysis.hpp"
#include "biaudit/attacks.hpp"
#include "biaudit/corpus.hpp"
#include "biaudit/error.hpp"
#include "biaudit/fairness.hpp"
#include "biaudit/finetune.hpp"
#include "json.hpp"

namespace biaudit {

/// Everything one end-to-end run depends on.
struct RunConfig {
  std::uint64_t master_seed = 20240917;

  // Fine-tuning corpus. The evaluation corpus and the attacker pool share its
  // generator settings but are gender balanced and have their own speakers.
  CorpusConfig corpus;
  std::size_t eval_speakers = 100;
  std::size_t eval_utts_per_speaker = 10;
  double eval_gender_balance = 0.5;
  std::size_t attack_speakers = 100;

  bool pretrain = false;
  std::size_t pretrain_steps = 500;
  std::size_t pretrain_batch = 4;
  std::size_t pretrain_sequence_length = 32;

  ModelDims model;
  FineTuneConfig finetune;  // variant and seed are set per run

  std::size_t n_target_trials = 1500;
  std::size_t n_nontarget_trials = 6000;

  FdrConfig fdr;
  std::vector<double> fdr_alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
  double fdr_plot_alpha = 0.5;
  FadNormalization fad_normalization = FadNormalization::kPairMax;

  AttackerConfig attacker;

  std::filesystem::path output_dir = "biaudit_run";

  void Validate() const;
  /// Deterministic JSON form; the output directory is excluded so that the
  /// run hash depends only on what affects results.
  nlohmann::json ToJson() const;
  std::string Hash() const;
};

/// Per-stage seeds, derived from the master seed by stage name.
struct StageSeeds {
  std::uint64_t master, gen_train, gen_eval, gen_attack, pretrain, trials, attack;
  std::uint64_t ModelInit(Variant v) const;
  std::uint64_t Finetune(Variant v) const;
  nlohmann::json ToJson() const;
};
StageSeeds SeedsFor(std::uint64_t master_seed);

/// Error raised inside a named pipeline stage; keeps the original kind.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.kind(), "[" + stage + "] " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

int ExitCodeFor(ErrorKind kind);

/// Upper bound on concurrently trained variants: BIAUDIT_THREADS if set,
/// otherwise the hardware concurrency, never below one.
std::size_t VariantThreadCap();

struct PipelineResult {
  ReportBundle bundle;
  std::vector<SpeakerModel> models;
  std::string run_hash;
};

using ProgressFn = std::function<void(const std::string&)>;

PipelineResult RunPipeline(const RunConfig& cfg, const ProgressFn& progress = {});

/// Re-runs evaluation and report assembly from the corpora and checkpoints a
/// previous pipeline run left in cfg.output_dir.
PipelineResult ReportFromRun(const RunConfig& cfg, const ProgressFn& progress = {});

}  // namespace biaudit
