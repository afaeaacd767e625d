// include/biaudit/pretrain.hpp

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
#include <span>
#include <vector>

#include "biaudit/gradkit.hpp"
#include "biaudit/losses.hpp"
#include "biaudit/rng.hpp"

// Desk-scale self-supervised pre-training: a frame encoder produces latents,
// a masked copy of the latents feeds a windowed context network, and an
// unmasked copy is quantized through G Gumbel-softmax codebooks. The loss is
// the contrastive term over masked steps plus the codebook diversity term.

namespace biaudit {

struct MaskConfig {
  double mask_prob = 0.065;
  std::size_t span = 2;
};

struct MaskPlan {
  std::vector<bool> mask;
  double mask_prob = 0.0;
  std::size_t span = 0;
  std::size_t masked_count() const;
};

/// Each step starts a span with probability mask_prob; spans running past the
/// end are truncated. Redraws until at least one step is masked.
MaskPlan PlanMask(std::size_t steps, double mask_prob, std::size_t span, std::uint64_t seed);

struct PretrainDims {
  std::size_t frame_dim = 16;
  std::size_t hidden = 32;
  std::size_t latent_dim = 16;
  std::size_t context_dim = 16;
  std::size_t codeword_dim = 8;
  std::size_t context_radius = 2;
};

/// G codebooks of V codewords each plus the logit and output projections.
struct CodebookSet {
  std::size_t groups = 0;
  std::size_t size = 0;
  std::size_t codeword_dim = 0;
  grad::Parameter logit_w, logit_b;       // [d_z, G*V], [G*V]
  std::vector<grad::Parameter> codewords;  // G x [V, d_cw]
  grad::Parameter proj_w, proj_b;         // [G*d_cw, d], [d]
};

/// Frame MLP (latents) and windowed context MLP.
struct ToyEncoder {
  std::size_t radius = 0;
  grad::Parameter frame_w1, frame_b1, frame_w2, frame_b2;
  grad::Parameter context_w1, context_b1, context_w2, context_b2;
  grad::Parameter mask_embedding;  // [d_z]
};

struct PretrainModel {
  PretrainDims dims;
  ToyEncoder encoder;
  CodebookSet codebooks;
  std::vector<grad::Parameter*> Parameters();
};

PretrainModel BuildPretrainModel(const PretrainDims& dims, const PretrainLossConfig& loss,
                                 std::uint64_t seed);

struct QuantizeResult {
  grad::Var quantized;   // [T, d]
  grad::Var mean_probs;  // [G, V], batch-averaged soft assignments
  grad::Var selected;    // [T, G*d_cw], concatenated chosen codewords
  std::vector<std::vector<std::size_t>> choices;  // [T][G] codeword index
};

QuantizeResult Quantize(grad::Tape& tape, grad::Var latents, CodebookSet& codebooks,
                        double temperature, NoiseStream& noise);

struct PretrainConfig {
  PretrainLossConfig loss;
  MaskConfig mask;
  grad::SgdConfig optimizer{0.002, 0.9};
  double gumbel_temperature = 2.0;
};

struct PretrainStepResult {
  double loss_total = 0.0;
  double loss_m = 0.0;
  double loss_d = 0.0;
  std::size_t masked_steps = 0;
  /// Mean over codebooks of H(p_g), natural log.
  double codebook_entropy = 0.0;
  /// Quantized targets [B*T, d] and the codeword picked per step and codebook.
  grad::Tensor quantized;
  std::vector<std::vector<std::size_t>> choices;
};

/// Loss terms for one batch of equal-length [T, frame_dim] sequences. With
/// `update` set, gradients are applied with one optimizer step.
PretrainStepResult PretrainStep(std::span<const grad::Tensor> batch, PretrainModel& model,
                                const PretrainConfig& cfg, std::uint64_t step_seed,
                                bool update = true);

/// Latents z for a single sequence (no masking), for diagnostics.
grad::Tensor EncodeLatents(const PretrainModel& model, const grad::Tensor& frames);

}  // namespace biaudit
