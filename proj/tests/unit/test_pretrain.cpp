// tests/unit/test_pretrain.cpp

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

#include <cmath>
#include <vector>

#include "biaudit/corpus.hpp"
#include "biaudit/pretrain.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace biaudit;
using namespace biaudit::grad;

namespace {

// Probability that step t is masked when every step starts a span with
// probability p, conditioned on at least one start.
double ExpectedMaskRate(std::size_t steps, double p, std::size_t span) {
  double sum = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t covering = std::min(t, span - 1) + 1;
    sum += 1.0 - std::pow(1.0 - p, static_cast<double>(covering));
  }
  return sum / static_cast<double>(steps) / (1.0 - std::pow(1.0 - p, double(steps)));
}

}  // namespace

TEST_CASE("mask planning") {
  auto full = PlanMask(10, 0.999, 2, 1);
  CHECK(full.masked_count() == 10);
  CHECK(PlanMask(50, 0.065, 2, 9).mask == PlanMask(50, 0.065, 2, 9).mask);
  CHECK_THROWS(PlanMask(1, 0.5, 2, 1));
  CHECK_THROWS(PlanMask(10, 0.0, 2, 1));
  CHECK_THROWS(PlanMask(10, 1.0, 2, 1));

  // Rare starts: every plan still masks something.
  for (std::uint64_t s = 0; s < 200; ++s) CHECK(PlanMask(5, 0.01, 1, s).masked_count() >= 1);

  double masked = 0.0;
  const int plans = 10000;
  for (int i = 0; i < plans; ++i) masked += PlanMask(50, 0.065, 2, 1000 + i).masked_count();
  const double rate = masked / (plans * 50.0);
  CHECK(std::abs(rate - ExpectedMaskRate(50, 0.065, 2)) <= 0.02);
}

TEST_CASE("quantization structure") {
  PretrainDims dims;
  PretrainLossConfig loss;
  PretrainModel model = BuildPretrainModel(dims, loss, 3);
  auto& cb = model.codebooks;
  Rng rng(4);
  Tensor z = biaudit::testing::RandomTensor({20, dims.latent_dim}, rng);
  NoiseStream noise(5);
  Tape tape;
  QuantizeResult q = Quantize(tape, tape.Constant(z), cb, 2.0, noise);

  const Tensor& probs = q.mean_probs.value();
  REQUIRE(probs.shape() == Shape{cb.groups, cb.size});
  for (std::size_t g = 0; g < cb.groups; ++g) {
    double s = 0.0;
    for (std::size_t v = 0; v < cb.size; ++v) s += probs.at(g, v);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }

  // Selected rows are exactly the chosen codewords, and q is their projection.
  const Tensor& sel = q.selected.value();
  for (std::size_t t = 0; t < 20; ++t) {
    for (std::size_t g = 0; g < cb.groups; ++g) {
      const std::size_t v = q.choices[t][g];
      REQUIRE(v < cb.size);
      for (std::size_t k = 0; k < cb.codeword_dim; ++k)
        CHECK(sel.at(t, g * cb.codeword_dim + k) == cb.codewords[g].value.at(v, k));
    }
  }
  const Tensor& out = q.quantized.value();
  for (std::size_t t = 0; t < 20; ++t) {
    for (std::size_t j = 0; j < dims.context_dim; ++j) {
      double acc = cb.proj_b.value[j];
      for (std::size_t k = 0; k < sel.cols(); ++k) acc += sel.at(t, k) * cb.proj_w.value.at(k, j);
      CHECK(std::abs(out.at(t, j) - acc) <= 1e-12);
    }
  }
}

TEST_CASE("strongly separated codebook logits pick the argmax") {
  PretrainDims dims;
  PretrainLossConfig loss;
  loss.codebook_size = 2;
  PretrainModel model = BuildPretrainModel(dims, loss, 6);
  auto& cb = model.codebooks;
  cb.logit_w.value.Fill(0.0);
  for (std::size_t g = 0; g < cb.groups; ++g) {
    cb.logit_b.value[g * 2] = 6.0;
    cb.logit_b.value[g * 2 + 1] = -6.0;
  }
  NoiseStream noise(7);
  std::size_t agree = 0, total = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Tape tape;
    QuantizeResult q =
        Quantize(tape, tape.Constant(Tensor(Shape{50, dims.latent_dim}, 0.1)), cb, 2.0, noise);
    for (const auto& row : q.choices)
      for (std::size_t c : row) {
        agree += c == 0;
        ++total;
      }
  }
  CHECK(double(agree) / double(total) >= 0.99);
}

TEST_CASE("pretrain step bookkeeping") {
  PretrainDims dims;
  PretrainConfig cfg;
  auto seqs = GeneratePretrainSequences(4, 32, dims.frame_dim, 8);
  PretrainModel model = BuildPretrainModel(dims, cfg.loss, 9);
  auto r = PretrainStep(seqs, model, cfg, 10, false);
  CHECK(std::abs(r.loss_total - (r.loss_m + r.loss_d)) <= 1e-12);
  CHECK(r.loss_m >= 0.0);
  CHECK(r.masked_steps >= 1);

  PretrainConfig no_div = cfg;
  no_div.loss.diversity_weight = 0.0;
  auto r0 = PretrainStep(seqs, model, no_div, 10, false);
  CHECK(r0.loss_total == r0.loss_m);

  // The quantized targets do not depend on the mask.
  PretrainConfig heavy = cfg;
  heavy.mask.mask_prob = 0.4;
  auto rh = PretrainStep(seqs, model, heavy, 10, false);
  CHECK(rh.masked_steps != r.masked_steps);
  CHECK(rh.quantized == r.quantized);
  CHECK(rh.choices == r.choices);

  // update=false leaves the parameters alone; update=true moves them.
  const Tensor before = model.encoder.frame_w1.value;
  PretrainStep(seqs, model, cfg, 11, false);
  CHECK(model.encoder.frame_w1.value == before);
  PretrainStep(seqs, model, cfg, 11, true);
  CHECK_FALSE(model.encoder.frame_w1.value == before);

  CHECK_THROWS(PretrainStep(std::span<const Tensor>(), model, cfg, 1));
}

TEST_CASE("unmasked context rows do not enter the contrastive term") {
  Rng rng(12);
  PretrainLossConfig cfg;
  cfg.n_distractors = 2;
  bool mask[6] = {true, false, true, false, true, false};
  auto ds = SampleDistractors(mask, 2, rng);
  Tensor c = biaudit::testing::RandomTensor({6, 4}, rng);
  Tensor q = biaudit::testing::RandomTensor({6, 4}, rng);
  Tape tape;
  const double base = ContrastiveLoss(tape.Constant(c), tape.Constant(q), mask, ds, cfg).item();
  for (std::size_t t : {1, 3, 5})
    for (std::size_t k = 0; k < 4; ++k) c.at(t, k) = rng.Normal();
  CHECK(ContrastiveLoss(tape.Constant(c), tape.Constant(q), mask, ds, cfg).item() == base);
}

namespace {

struct TrainOutcome {
  PretrainStepResult before, after;
};

TrainOutcome TrainToySet(const PretrainConfig& cfg) {
  PretrainDims dims;
  const auto seqs = GeneratePretrainSequences(16, 32, dims.frame_dim, 13);
  PretrainModel model = BuildPretrainModel(dims, cfg.loss, 14);
  // Fixed evaluation seed so before and after see the same masks and noise.
  TrainOutcome out;
  out.before = PretrainStep(seqs, model, cfg, 99, false);
  for (std::size_t step = 0; step < 500; ++step) {
    std::vector<Tensor> batch;
    for (std::size_t i = 0; i < 4; ++i) batch.push_back(seqs[(step * 4 + i) % seqs.size()]);
    PretrainStep(batch, model, cfg, SplitMix64(15 + step));
  }
  out.after = PretrainStep(seqs, model, cfg, 99, false);
  return out;
}

}  // namespace

TEST_CASE("500 seeded steps reduce the contrastive loss") {
  const auto r = TrainToySet(PretrainConfig{});
  MESSAGE("L_m " << r.before.loss_m << " -> " << r.after.loss_m);
  CHECK(r.after.loss_m <= 0.8 * r.before.loss_m);
}

TEST_CASE("diversity term raises codebook entropy") {
  // L_m sums over every masked step of the batch while L_d is a per-batch
  // average, so at weight 0.1 the diversity gradient is negligible here. A
  // weight of 10 puts the two terms on a comparable footing.
  PretrainConfig with;
  with.loss.diversity_weight = 10.0;
  PretrainConfig without;
  without.loss.diversity_weight = 0.0;
  const auto a = TrainToySet(with), b = TrainToySet(without);
  MESSAGE("entropy " << a.before.codebook_entropy << " -> " << a.after.codebook_entropy
                     << " (no diversity term: " << b.after.codebook_entropy << ")");
  CHECK(a.after.codebook_entropy >= a.before.codebook_entropy);
  CHECK(a.after.codebook_entropy > b.after.codebook_entropy);
  CHECK(a.after.loss_m <= 0.8 * a.before.loss_m);
}
