// src/losses.cpp

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

#include "biaudit/losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "biaudit/error.hpp"

namespace biaudit {

using grad::Tensor;
using grad::Var;

namespace {

Var AsRows(Var x) {
  if (x.value().rank() == 1) return grad::Reshape(x, grad::Shape{1, x.shape()[0]});
  return x;
}

void CheckNorms(const Tensor& t, bool by_rows, const char* what) {
  const std::size_t n = t.rows(), m = t.cols();
  const std::size_t outer = by_rows ? n : m, inner = by_rows ? m : n;
  for (std::size_t a = 0; a < outer; ++a) {
    double s = 0.0;
    for (std::size_t b = 0; b < inner; ++b) {
      const double v = by_rows ? t[a * m + b] : t[b * m + a];
      s += v * v;
    }
    if (!(s > 0.0))
      throw DataError(std::string("degenerate norm in ") + what + " " + std::to_string(a));
  }
}

}  // namespace

Var AamSoftmaxLoss(Var embeddings, Var weights, std::span<const int> labels,
                   const AamConfig& cfg) {
  if (!(cfg.scale > 0.0)) throw ConfigError("AAM scale must be positive");
  if (!(cfg.margin >= 0.0 && cfg.margin < std::numbers::pi / 2))
    throw ConfigError("AAM margin must lie in [0, pi/2)");
  Var e = AsRows(embeddings);
  if (weights.value().rank() != 2 || e.shape()[1] != weights.shape()[0])
    throw std::invalid_argument("aam: embedding shape " + grad::ShapeString(embeddings.shape()) +
                                " incompatible with weight shape " +
                                grad::ShapeString(weights.shape()));
  const std::size_t n_classes = weights.shape()[1];
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes)
      throw std::invalid_argument("aam: label " + std::to_string(l) + " out of range");
  CheckNorms(e.value(), true, "embedding");
  CheckNorms(weights.value(), false, "weight column");
  Var cosines = grad::MatMul(grad::L2NormalizeRows(e), grad::L2NormalizeCols(weights));
  Var logits = grad::Scale(grad::AngularMargin(cosines, labels, cfg.margin), cfg.scale);
  return grad::CrossEntropy(logits, labels, grad::Reduction::kMean);
}

Tensor AamCosines(const Tensor& embeddings, const Tensor& weights) {
  const std::size_t n = embeddings.rows(), d = embeddings.cols(), k = weights.shape().at(1);
  std::vector<double> col_norm(k, 0.0);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t c = 0; c < k; ++c) col_norm[c] += weights.at(j, c) * weights.at(j, c);
  Tensor out(grad::Shape{n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double en = 0.0;
    for (std::size_t j = 0; j < d; ++j) en += embeddings[i * d + j] * embeddings[i * d + j];
    for (std::size_t c = 0; c < k; ++c) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += embeddings[i * d + j] * weights.at(j, c);
      const double denom = std::sqrt(en * col_norm[c]);
      out.at(i, c) = denom > 0.0 ? dot / denom : 0.0;
    }
  }
  return out;
}

Var GenderBranchInput(Var embedding, const MixConfig& cfg) {
  return cfg.adversarial ? grad::GradientReversal(embedding, cfg.grl_scale) : embedding;
}

Var CombinedLoss(Var loss_s, Var loss_g, const MixConfig& cfg) {
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0))
    throw ConfigError("lambda must lie in [0, 1], got " + std::to_string(cfg.lambda));
  if (cfg.lambda == 1.0) return grad::Scale(loss_s, 1.0);
  if (cfg.lambda == 0.0) return grad::Scale(loss_g, 1.0);
  return grad::Add(grad::Scale(loss_s, cfg.lambda), grad::Scale(loss_g, 1.0 - cfg.lambda));
}

Var ContrastiveLoss(Var context, Var quantized, std::span<const bool> mask,
                    std::span<const std::vector<std::size_t>> distractors,
                    const PretrainLossConfig& cfg) {
  if (!(cfg.kappa > 0.0)) throw ConfigError("kappa must be positive");
  if (context.shape() != quantized.shape() || context.value().rank() != 2)
    throw std::invalid_argument("contrastive: context " + grad::ShapeString(context.shape()) +
                                " vs quantized " + grad::ShapeString(quantized.shape()));
  const std::size_t steps = context.shape()[0];
  if (mask.size() != steps) throw std::invalid_argument("contrastive: mask length mismatch");
  std::vector<std::size_t> masked;
  for (std::size_t t = 0; t < steps; ++t)
    if (mask[t]) masked.push_back(t);
  if (masked.empty()) throw DataError("empty mask");
  if (distractors.size() != masked.size())
    throw std::invalid_argument("contrastive: one distractor list per masked step required");
  CheckNorms(context.value(), true, "context row");
  CheckNorms(quantized.value(), true, "quantized row");

  const std::size_t k = cfg.n_distractors;
  std::vector<std::size_t> ctx_rows, cand_rows;
  ctx_rows.reserve(masked.size() * (k + 1));
  cand_rows.reserve(masked.size() * (k + 1));
  for (std::size_t i = 0; i < masked.size(); ++i) {
    const std::size_t t = masked[i];
    if (distractors[i].size() != k)
      throw std::invalid_argument("contrastive: step " + std::to_string(t) + " has " +
                                  std::to_string(distractors[i].size()) +
                                  " distractors, expected " + std::to_string(k));
    ctx_rows.insert(ctx_rows.end(), k + 1, t);
    cand_rows.push_back(t);
    for (std::size_t d : distractors[i]) {
      if (d == t || d >= steps)
        throw std::invalid_argument("contrastive: invalid distractor " + std::to_string(d) +
                                    " for step " + std::to_string(t));
      cand_rows.push_back(d);
    }
  }
  Var c = grad::GatherRows(grad::L2NormalizeRows(context), ctx_rows);
  Var q = grad::GatherRows(grad::L2NormalizeRows(quantized), cand_rows);
  Var logits = grad::Reshape(grad::Scale(grad::RowDot(c, q), 1.0 / cfg.kappa),
                             grad::Shape{masked.size(), k + 1});
  // The true codeword sits in column 0 of every row.
  std::vector<int> labels(masked.size(), 0);
  return grad::CrossEntropy(logits, labels, grad::Reduction::kSum);
}

std::vector<std::vector<std::size_t>> SampleDistractors(std::span<const bool> mask,
                                                        std::size_t n_distractors, Rng& rng) {
  std::vector<std::size_t> masked;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t]) masked.push_back(t);
  if (masked.size() < n_distractors + 1)
    throw DataError("not enough masked steps (" + std::to_string(masked.size()) + ") to draw " +
                    std::to_string(n_distractors) + " distractors");
  std::vector<std::vector<std::size_t>> out;
  out.reserve(masked.size());
  for (std::size_t i = 0; i < masked.size(); ++i) {
    // Draw from the other masked steps: positions >= i shift by one.
    auto picks = rng.SampleWithoutReplacement(masked.size() - 1, n_distractors);
    std::vector<std::size_t> rows;
    rows.reserve(n_distractors);
    for (std::size_t p : picks) rows.push_back(masked[p < i ? p : p + 1]);
    out.push_back(std::move(rows));
  }
  return out;
}

Var DiversityLoss(Var mean_probs, const PretrainLossConfig& cfg) {
  const Tensor& p = mean_probs.value();
  if (p.rank() != 2) throw std::invalid_argument("diversity: expected [G,V] probabilities");
  const std::size_t g = p.shape()[0], v = p.shape()[1];
  for (std::size_t r = 0; r < g; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      if (p.at(r, j) < 0.0) throw DataError("diversity: negative probability");
      s += p.at(r, j);
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw DataError("diversity: row " + std::to_string(r) + " sums to " + std::to_string(s));
  }
  const double factor = -cfg.diversity_weight / static_cast<double>(g * v);
  return grad::Scale(grad::Sum(grad::RowEntropy(mean_probs)), factor);
}

}  // namespace biaudit
