// include/biaudit/finetune.hpp

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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biaudit/corpus.hpp"
#include "biaudit/datamodel.hpp"
#include "biaudit/gradkit.hpp"
#include "biaudit/losses.hpp"

namespace biaudit {

/// The three fine-tuning set-ups: speaker only, speaker + gender, and
/// speaker + gender through gradient reversal.
enum class Variant { kMs, kMsg, kMsga };

inline constexpr Variant kAllVariants[] = {Variant::kMs, Variant::kMsg, Variant::kMsga};

std::string_view VariantName(Variant v);
std::optional<Variant> ParseVariant(std::string_view name);
MixConfig MixFor(Variant v, double grl_scale);

struct ModelDims {
  std::size_t frame_dim = 24;
  std::size_t hidden = 64;
  std::size_t depth = 4;
  std::size_t n_speakers = 0;
};

struct FineTuneConfig {
  Variant variant = Variant::kMs;
  std::size_t warmup_steps = 200;
  std::size_t total_steps = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double grl_scale = 1.0;
  AamConfig aam;
  /// Replaces the variant's lambda when set.
  std::optional<double> lambda_override;
  std::uint64_t seed = 0;

  MixConfig Mix() const;
  /// Canonical text form; its FNV-1a digest is the config hash.
  std::string Canonical() const;
};

struct TrainingLog {
  std::vector<double> loss_total;
  std::vector<double> loss_speaker;
  std::vector<double> loss_gender;
  double speaker_train_accuracy = 0.0;
  double gender_train_accuracy = 0.0;
};

/// Backbone (frame MLP) with speaker head f_s and gender head f_g, both
/// operating on the time-mean embedding of the last backbone layer. Hidden
/// layers use ReLU; the last backbone layer is linear.
struct SpeakerModel {
  Variant variant = Variant::kMs;
  ModelDims dims;
  std::vector<grad::Parameter> layer_w;
  std::vector<grad::Parameter> layer_b;
  grad::Parameter speaker_w;  // [H, N], one class direction per column
  grad::Parameter gender_w;   // [H, 2]
  grad::Parameter gender_b;   // [2]
  std::string config_hash;
  TrainingLog log;

  std::vector<grad::Parameter*> BackboneParameters();
  std::vector<grad::Parameter*> HeadParameters();
  std::vector<grad::Parameter*> AllParameters();
  std::vector<const grad::Parameter*> AllParameters() const;
  std::uint64_t Hash() const;
};

SpeakerModel BuildModel(Variant variant, const ModelDims& dims, std::uint64_t seed);

/// Copies leading frame-encoder layers of a pre-trained model into the
/// backbone wherever the shapes agree. Returns the number of layers copied.
struct PretrainModel;
std::size_t InitBackboneFromPretrain(SpeakerModel& model, const PretrainModel& pretrained);

struct LossTerms {
  bool speaker = true;
  bool gender = true;
};

/// Loss values and backbone gradients for one batch without updating the
/// model. Used by the training loop's tests for paired-graph comparisons.
struct GradientProbe {
  double loss_total = 0.0;
  double loss_speaker = 0.0;
  double loss_gender = 0.0;
  std::vector<grad::Tensor> backbone_grads;  // weights then biases, per layer
};

GradientProbe ProbeGradients(const SpeakerModel& model, const Corpus& corpus,
                             std::span<const std::size_t> batch, const MixConfig& mix,
                             const AamConfig& aam, LossTerms terms = {});

/// Trains per the config: heads only during warm-up, then end to end.
SpeakerModel FineTune(SpeakerModel model, const Corpus& corpus, const FineTuneConfig& cfg);

/// Per-layer outputs (post-activation) for one [T, frame_dim] sequence.
std::vector<grad::Tensor> ForwardLayers(const SpeakerModel& model, const grad::Tensor& frames);
/// Time-mean of the final backbone layer.
std::vector<double> Embed(const SpeakerModel& model, const grad::Tensor& frames);

EmbeddingSet ExtractEmbeddings(const SpeakerModel& model, const Corpus& corpus);

/// One set per backbone layer: neurons x frames over all of the group's
/// utterances, frames concatenated in utterance order.
std::vector<LayerActivationSet> ExtractLayerActivations(const SpeakerModel& model,
                                                        const Corpus& corpus, GroupLabel group);

double SpeakerAccuracy(const SpeakerModel& model, const Corpus& corpus);
double GenderAccuracy(const SpeakerModel& model, const Corpus& corpus);

}  // namespace biaudit
