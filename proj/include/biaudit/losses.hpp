// include/biaudit/losses.hpp

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
#include <span>
#include <vector>

#include "biaudit/gradkit.hpp"
#include "biaudit/rng.hpp"

namespace biaudit {

struct AamConfig {
  double scale = 30.0;
  double margin = 0.2;  // radians, in [0, pi/2)
};

struct PretrainLossConfig {
  double kappa = 0.1;            // contrastive temperature
  double diversity_weight = 0.1;
  std::size_t n_distractors = 10;
  std::size_t n_codebooks = 2;
  std::size_t codebook_size = 8;
};

/// Weighting between the speaker and gender objectives.
struct MixConfig {
  double lambda = 1.0;
  bool adversarial = false;
  double grl_scale = 1.0;
};

/// Additive angular margin softmax. `embeddings` is [d] or [n,d]; `weights`
/// is [d,N] with one class direction per column. Averages over rows.
grad::Var AamSoftmaxLoss(grad::Var embeddings, grad::Var weights,
                         std::span<const int> labels, const AamConfig& cfg);

/// Cosine logits s * cos(theta) without margin, [n,N]; used for prediction.
grad::Tensor AamCosines(const grad::Tensor& embeddings, const grad::Tensor& weights);

/// Input to the gender head: the embedding itself, or its gradient-reversed
/// image when the mix is adversarial.
grad::Var GenderBranchInput(grad::Var embedding, const MixConfig& cfg);

/// lambda * loss_s + (1 - lambda) * loss_g. At the boundaries the unused term
/// is not part of the graph, so it contributes neither value nor gradient.
grad::Var CombinedLoss(grad::Var loss_s, grad::Var loss_g, const MixConfig& cfg);

/// Contrastive term over masked steps. `distractors[k]` lists the distractor
/// rows for the k-th masked step (in row order); each list has exactly
/// cfg.n_distractors entries and excludes the step itself.
grad::Var ContrastiveLoss(grad::Var context, grad::Var quantized, std::span<const bool> mask,
                          std::span<const std::vector<std::size_t>> distractors,
                          const PretrainLossConfig& cfg);

/// Distractors for every masked step, drawn uniformly without replacement
/// from the other masked steps.
std::vector<std::vector<std::size_t>> SampleDistractors(std::span<const bool> mask,
                                                        std::size_t n_distractors, Rng& rng);

/// -alpha / (G V) * sum_g H(p_g) over rows of mean codeword probabilities.
grad::Var DiversityLoss(grad::Var mean_probs, const PretrainLossConfig& cfg);

}  // namespace biaudit
