// src/pretrain.cpp

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

#include "biaudit/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "biaudit/error.hpp"

namespace biaudit {

using grad::Parameter;
using grad::Shape;
using grad::Tensor;
using grad::Var;

std::size_t MaskPlan::masked_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

MaskPlan PlanMask(std::size_t steps, double mask_prob, std::size_t span, std::uint64_t seed) {
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw ConfigError("mask_prob must lie in (0, 1)");
  if (span < 1) throw ConfigError("mask span must be >= 1");
  if (steps < span)
    throw ConfigError("sequence of " + std::to_string(steps) + " steps is shorter than span " +
                      std::to_string(span));
  Rng rng(seed);
  MaskPlan plan;
  plan.mask_prob = mask_prob;
  plan.span = span;
  do {
    plan.mask.assign(steps, false);
    for (std::size_t t = 0; t < steps; ++t)
      if (rng.Uniform() < mask_prob)
        for (std::size_t k = t; k < std::min(steps, t + span); ++k) plan.mask[k] = true;
  } while (plan.masked_count() == 0);
  return plan;
}

namespace {

Parameter UniformParam(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.storage()) v = rng.Uniform(-bound, bound);
  return Parameter(std::move(name), std::move(t));
}

Parameter ZeroParam(std::string name, Shape shape) {
  return Parameter(std::move(name), Tensor(std::move(shape)));
}

}  // namespace

std::vector<Parameter*> PretrainModel::Parameters() {
  std::vector<Parameter*> out = {
      &encoder.frame_w1,   &encoder.frame_b1,   &encoder.frame_w2,   &encoder.frame_b2,
      &encoder.context_w1, &encoder.context_b1, &encoder.context_w2, &encoder.context_b2,
      &encoder.mask_embedding, &codebooks.logit_w, &codebooks.logit_b};
  for (auto& c : codebooks.codewords) out.push_back(&c);
  out.push_back(&codebooks.proj_w);
  out.push_back(&codebooks.proj_b);
  return out;
}

PretrainModel BuildPretrainModel(const PretrainDims& dims, const PretrainLossConfig& loss,
                                 std::uint64_t seed) {
  if (loss.n_codebooks < 1 || loss.codebook_size < 2)
    throw ConfigError("need G >= 1 codebooks of size V >= 2");
  Rng rng(seed);
  PretrainModel m;
  m.dims = dims;
  auto& e = m.encoder;
  const std::size_t window = (2 * dims.context_radius + 1) * dims.latent_dim;
  e.radius = dims.context_radius;
  e.frame_w1 = UniformParam("frame_w1", {dims.frame_dim, dims.hidden}, dims.frame_dim, rng);
  e.frame_b1 = ZeroParam("frame_b1", {dims.hidden});
  e.frame_w2 = UniformParam("frame_w2", {dims.hidden, dims.latent_dim}, dims.hidden, rng);
  e.frame_b2 = ZeroParam("frame_b2", {dims.latent_dim});
  e.context_w1 = UniformParam("context_w1", {window, dims.hidden}, window, rng);
  e.context_b1 = ZeroParam("context_b1", {dims.hidden});
  e.context_w2 = UniformParam("context_w2", {dims.hidden, dims.context_dim}, dims.hidden, rng);
  e.context_b2 = ZeroParam("context_b2", {dims.context_dim});
  e.mask_embedding = UniformParam("mask_embedding", {dims.latent_dim}, dims.latent_dim, rng);

  auto& cb = m.codebooks;
  cb.groups = loss.n_codebooks;
  cb.size = loss.codebook_size;
  cb.codeword_dim = dims.codeword_dim;
  const std::size_t gv = cb.groups * cb.size;
  cb.logit_w = UniformParam("logit_w", {dims.latent_dim, gv}, dims.latent_dim, rng);
  cb.logit_b = ZeroParam("logit_b", {gv});
  for (std::size_t g = 0; g < cb.groups; ++g) {
    Tensor t(Shape{cb.size, cb.codeword_dim});
    for (auto& v : t.storage()) v = rng.Normal();
    cb.codewords.emplace_back("codebook_" + std::to_string(g), std::move(t));
  }
  const std::size_t concat = cb.groups * cb.codeword_dim;
  cb.proj_w = UniformParam("proj_w", {concat, dims.context_dim}, concat, rng);
  cb.proj_b = ZeroParam("proj_b", {dims.context_dim});
  return m;
}

QuantizeResult Quantize(grad::Tape& tape, Var latents, CodebookSet& cb, double temperature,
                        NoiseStream& noise) {
  if (!(temperature > 0.0)) throw ConfigError("Gumbel temperature must be positive");
  const std::size_t steps = latents.shape().at(0);
  Var logits = grad::Linear(latents, tape.Param(cb.logit_w), tape.Param(cb.logit_b));
  std::vector<Var> chosen, means;
  QuantizeResult r;
  r.choices.assign(steps, std::vector<std::size_t>(cb.groups));
  for (std::size_t g = 0; g < cb.groups; ++g) {
    Var lg = grad::SliceCols(logits, g * cb.size, cb.size);
    Var onehot = grad::GumbelSoftmaxST(lg, temperature, noise);
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t v = 0; v < cb.size; ++v)
        if (onehot.value().at(t, v) == 1.0) r.choices[t][g] = v;
    chosen.push_back(grad::MatMul(onehot, tape.Param(cb.codewords[g])));
    means.push_back(grad::MeanPoolTime(grad::Softmax(lg)));
  }
  r.selected = grad::ConcatCols(chosen);
  r.quantized = grad::Linear(r.selected, tape.Param(cb.proj_w), tape.Param(cb.proj_b));
  r.mean_probs = grad::ConcatRows(means);
  return r;
}

namespace {

Var FrameEncoder(grad::Tape& tape, Var x, ToyEncoder& e) {
  Var h = grad::Relu(grad::Linear(x, tape.Param(e.frame_w1), tape.Param(e.frame_b1)));
  return grad::Linear(h, tape.Param(e.frame_w2), tape.Param(e.frame_b2));
}

}  // namespace

PretrainStepResult PretrainStep(std::span<const Tensor> batch, PretrainModel& model,
                                const PretrainConfig& cfg, std::uint64_t step_seed,
                                bool update) {
  if (batch.empty()) throw DataError("empty pre-training batch");
  const std::size_t steps = batch[0].shape().at(0);
  const std::size_t fdim = batch[0].cols();
  std::vector<double> frames;
  frames.reserve(batch.size() * steps * fdim);
  for (const auto& seq : batch) {
    if (seq.rank() != 2 || seq.shape()[0] != steps || seq.shape()[1] != fdim)
      throw DataError("pre-training batch sequences must share shape " +
                      grad::ShapeString(batch[0].shape()));
    frames.insert(frames.end(), seq.data().begin(), seq.data().end());
  }

  // Every masked step needs K distractors among the other masked steps of the
  // batch, so a batch mask with too few masked steps is redrawn.
  std::vector<bool> mask;
  constexpr int kMaxMaskDraws = 1000;
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxMaskDraws)
      throw DataError("batch too small to mask more than " +
                      std::to_string(cfg.loss.n_distractors) + " steps");
    mask.clear();
    const std::uint64_t base = DeriveSeed(step_seed, "mask") + attempt * batch.size();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto plan = PlanMask(steps, cfg.mask.mask_prob, cfg.mask.span, SplitMix64(base + i));
      mask.insert(mask.end(), plan.mask.begin(), plan.mask.end());
    }
    if (static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)) >
        cfg.loss.n_distractors)
      break;
  }
  auto mask_buf = std::make_unique<bool[]>(mask.size());
  std::copy(mask.begin(), mask.end(), mask_buf.get());
  std::span<const bool> mask_span(mask_buf.get(), mask.size());

  grad::Tape tape;
  auto& e = model.encoder;
  Var x = tape.Constant(Tensor(Shape{batch.size() * steps, fdim}, std::move(frames)));
  Var z = FrameEncoder(tape, x, e);
  Var zm = grad::MaskRows(z, mask_span, tape.Param(e.mask_embedding));
  Var w = grad::WindowConcat(zm, steps, e.radius);
  Var hc = grad::Relu(grad::Linear(w, tape.Param(e.context_w1), tape.Param(e.context_b1)));
  Var c = grad::Linear(hc, tape.Param(e.context_w2), tape.Param(e.context_b2));

  NoiseStream noise(DeriveSeed(step_seed, "gumbel"));
  // Quantization consumes the unmasked latents.
  QuantizeResult q = Quantize(tape, z, model.codebooks, cfg.gumbel_temperature, noise);

  Rng rng(DeriveSeed(step_seed, "distractors"));
  auto distractors = SampleDistractors(mask_span, cfg.loss.n_distractors, rng);
  Var lm = ContrastiveLoss(c, q.quantized, mask_span, distractors, cfg.loss);
  Var ld = DiversityLoss(q.mean_probs, cfg.loss);
  Var total = grad::Add(lm, ld);

  PretrainStepResult r;
  r.loss_m = lm.item();
  r.loss_d = ld.item();
  r.loss_total = total.item();
  r.masked_steps = std::count(mask.begin(), mask.end(), true);
  r.quantized = q.quantized.value();
  r.choices = q.choices;
  {
    const Tensor& p = q.mean_probs.value();
    double h = 0.0;
    for (std::size_t g = 0; g < p.rows(); ++g)
      for (std::size_t v = 0; v < p.cols(); ++v)
        if (p.at(g, v) > 0.0) h -= p.at(g, v) * std::log(p.at(g, v));
    r.codebook_entropy = h / static_cast<double>(p.rows());
  }
  if (!std::isfinite(r.loss_total))
    throw DivergenceError("pre-training loss is not finite");
  if (update) {
    tape.Backward(total);
    auto params = model.Parameters();
    grad::SgdStep(params, cfg.optimizer);
  }
  return r;
}

Tensor EncodeLatents(const PretrainModel& model, const Tensor& frames) {
  PretrainModel copy = model;
  grad::Tape tape;
  return FrameEncoder(tape, tape.Constant(frames), copy.encoder).value();
}

}  // namespace biaudit
