// src/finetune.cpp

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

#include "biaudit/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "biaudit/error.hpp"
#include "biaudit/pretrain.hpp"
#include "biaudit/rng.hpp"

namespace biaudit {

using grad::Parameter;
using grad::Shape;
using grad::Tensor;
using grad::Var;

std::string_view VariantName(Variant v) {
  switch (v) {
    case Variant::kMs: return "M_s";
    case Variant::kMsg: return "M_sg";
    case Variant::kMsga: return "M_sga";
  }
  return "?";
}

std::optional<Variant> ParseVariant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (VariantName(v) == name) return v;
  return std::nullopt;
}

MixConfig MixFor(Variant v, double grl_scale) {
  switch (v) {
    case Variant::kMs: return MixConfig{1.0, false, grl_scale};
    case Variant::kMsg: return MixConfig{0.5, false, grl_scale};
    case Variant::kMsga: return MixConfig{0.5, true, grl_scale};
  }
  return {};
}

MixConfig FineTuneConfig::Mix() const {
  MixConfig m = MixFor(variant, grl_scale);
  if (lambda_override) m.lambda = *lambda_override;
  return m;
}

std::string FineTuneConfig::Canonical() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << "variant=" << VariantName(variant) << ";warmup=" << warmup_steps
     << ";total=" << total_steps << ";batch=" << batch_size << ";lr=" << learning_rate
     << ";momentum=" << momentum << ";grl=" << grl_scale << ";aam_s=" << aam.scale
     << ";aam_m=" << aam.margin << ";lambda=" << Mix().lambda << ";seed=" << seed;
  return ss.str();
}

std::vector<Parameter*> SpeakerModel::BackboneParameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < layer_w.size(); ++l) {
    out.push_back(&layer_w[l]);
    out.push_back(&layer_b[l]);
  }
  return out;
}

std::vector<Parameter*> SpeakerModel::HeadParameters() {
  return {&speaker_w, &gender_w, &gender_b};
}

std::vector<Parameter*> SpeakerModel::AllParameters() {
  auto out = BackboneParameters();
  for (auto* p : HeadParameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> SpeakerModel::AllParameters() const {
  auto ptrs = const_cast<SpeakerModel*>(this)->AllParameters();
  return {ptrs.begin(), ptrs.end()};
}

std::uint64_t SpeakerModel::Hash() const {
  std::uint64_t h = Fnv1a64(VariantName(variant));
  h = Fnv1a64(config_hash, h);
  for (const Parameter* p : AllParameters()) {
    h = Fnv1a64(p->name, h);
    h = Fnv1a64(p->value.data(), h);
  }
  return h;
}

SpeakerModel BuildModel(Variant variant, const ModelDims& dims, std::uint64_t seed) {
  if (dims.depth < 1 || dims.hidden < 1 || dims.frame_dim < 1)
    throw ConfigError("model dimensions must be positive");
  if (dims.n_speakers < 2) throw ConfigError("need at least 2 training speakers");
  Rng rng(seed);
  auto uniform = [&rng](std::string name, Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.storage()) v = rng.Uniform(-bound, bound);
    return Parameter(std::move(name), std::move(t));
  };
  SpeakerModel m;
  m.variant = variant;
  m.dims = dims;
  std::size_t in = dims.frame_dim;
  for (std::size_t l = 0; l < dims.depth; ++l) {
    m.layer_w.push_back(uniform("layer" + std::to_string(l) + "_w", {in, dims.hidden}, in));
    m.layer_b.emplace_back("layer" + std::to_string(l) + "_b", Tensor(Shape{dims.hidden}));
    in = dims.hidden;
  }
  m.speaker_w = uniform("speaker_w", {dims.hidden, dims.n_speakers}, dims.hidden);
  m.gender_w = uniform("gender_w", {dims.hidden, 2}, dims.hidden);
  m.gender_b = Parameter("gender_b", Tensor(Shape{2}));
  return m;
}

std::size_t InitBackboneFromPretrain(SpeakerModel& model, const PretrainModel& pretrained) {
  const auto& e = pretrained.encoder;
  const std::pair<const Parameter*, const Parameter*> source[] = {
      {&e.frame_w1, &e.frame_b1}, {&e.frame_w2, &e.frame_b2}};
  std::size_t copied = 0;
  for (std::size_t l = 0; l < std::min<std::size_t>(2, model.layer_w.size()); ++l) {
    if (model.layer_w[l].value.shape() != source[l].first->value.shape()) break;
    model.layer_w[l].value = source[l].first->value;
    model.layer_b[l].value = source[l].second->value;
    ++copied;
  }
  return copied;
}

namespace {

struct BatchGraph {
  Var loss_total;
  Var loss_speaker;
  Var loss_gender;
  Var objective;  // loss_total plus the detached probe term for M_s
};

Tensor StackFrames(const Corpus& corpus, std::span<const std::size_t> batch) {
  const std::size_t per = corpus.frames_per_utt * corpus.frame_dim;
  std::vector<double> data;
  data.reserve(batch.size() * per);
  for (std::size_t i : batch) {
    const auto& f = corpus.utterances.at(i).frames;
    if (f.size() != per)
      throw DataError("utterance '" + corpus.utterances[i].id + "' has frames of shape " +
                      grad::ShapeString(f.shape()));
    data.insert(data.end(), f.data().begin(), f.data().end());
  }
  return Tensor(Shape{batch.size() * corpus.frames_per_utt, corpus.frame_dim}, std::move(data));
}

BatchGraph BuildGraph(grad::Tape& tape, SpeakerModel& model, const Corpus& corpus,
                      std::span<const std::size_t> batch, const MixConfig& mix,
                      const AamConfig& aam, LossTerms terms) {
  std::vector<int> speakers, genders;
  for (std::size_t i : batch) {
    const auto& u = corpus.utterances.at(i);
    if (u.speaker_index >= model.dims.n_speakers)
      throw DataError("utterance '" + u.id + "' has a speaker outside the model's classes");
    speakers.push_back(static_cast<int>(u.speaker_index));
    genders.push_back(GroupCode(u.group));
  }
  Var h = tape.Constant(StackFrames(corpus, batch));
  const std::size_t depth = model.layer_w.size();
  for (std::size_t l = 0; l < depth; ++l) {
    h = grad::Linear(h, tape.Param(model.layer_w[l]), tape.Param(model.layer_b[l]));
    if (l + 1 < depth) h = grad::Relu(h);
  }
  Var emb = grad::MeanPoolSegments(h, corpus.frames_per_utt);

  BatchGraph g;
  g.loss_speaker = AamSoftmaxLoss(emb, tape.Param(model.speaker_w), speakers, aam);
  // The gender head reads the unit-norm embedding, the same direction the
  // speaker head and the cosine scorer see; this keeps the reversed branch
  // from winning by inflating the embedding norm. For a lambda = 1 model the
  // head is a probe on a detached embedding.
  const bool probe = mix.lambda == 1.0;
  Var unit = grad::L2NormalizeRows(emb);
  Var gender_in = probe ? grad::Detach(unit) : GenderBranchInput(unit, mix);
  Var logits = grad::Linear(gender_in, tape.Param(model.gender_w), tape.Param(model.gender_b));
  g.loss_gender = grad::CrossEntropy(logits, genders);

  if (terms.speaker && terms.gender) {
    g.loss_total = CombinedLoss(g.loss_speaker, g.loss_gender, mix);
  } else if (terms.speaker) {
    g.loss_total = grad::Scale(g.loss_speaker, mix.lambda);
  } else {
    g.loss_total = grad::Scale(g.loss_gender, probe ? 1.0 : 1.0 - mix.lambda);
  }
  g.objective = probe && terms.speaker && terms.gender ? grad::Add(g.loss_total, g.loss_gender)
                                                       : g.loss_total;
  return g;
}

}  // namespace

GradientProbe ProbeGradients(const SpeakerModel& model, const Corpus& corpus,
                             std::span<const std::size_t> batch, const MixConfig& mix,
                             const AamConfig& aam, LossTerms terms) {
  SpeakerModel work = model;
  for (auto* p : work.AllParameters()) p->ZeroGrad();
  grad::Tape tape;
  BatchGraph g = BuildGraph(tape, work, corpus, batch, mix, aam, terms);
  tape.Backward(g.objective);
  GradientProbe out;
  out.loss_total = g.loss_total.item();
  out.loss_speaker = g.loss_speaker.item();
  out.loss_gender = g.loss_gender.item();
  for (auto* p : work.BackboneParameters()) out.backbone_grads.push_back(p->grad);
  return out;
}

SpeakerModel FineTune(SpeakerModel model, const Corpus& corpus, const FineTuneConfig& cfg) {
  if (corpus.utterances.empty()) throw DataError("empty corpus");
  if (corpus.speakers.size() < 2) throw DataError("fine-tuning needs at least 2 speakers");
  if (cfg.warmup_steps > cfg.total_steps)
    throw ConfigError("warmup_steps must not exceed total_steps");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (corpus.frame_dim != model.dims.frame_dim)
    throw DataError("corpus frame_dim " + std::to_string(corpus.frame_dim) +
                    " does not match the model's " + std::to_string(model.dims.frame_dim));
  const MixConfig mix = cfg.Mix();
  model.config_hash = HexDigest(Fnv1a64(cfg.Canonical()));
  const grad::SgdConfig sgd{cfg.learning_rate, cfg.momentum};

  Rng rng(DeriveSeed(cfg.seed, "finetune-batches"));
  std::vector<std::size_t> order(corpus.utterances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  std::vector<std::size_t> batch(cfg.batch_size);

  auto all = model.AllParameters();
  auto backbone = model.BackboneParameters();
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const bool frozen = step < cfg.warmup_steps;
    for (auto* p : backbone) p->frozen = frozen;
    for (auto& b : batch) {
      if (cursor == order.size()) {
        rng.Shuffle(order);
        cursor = 0;
      }
      b = order[cursor++];
    }
    grad::Tape tape;
    BatchGraph g = BuildGraph(tape, model, corpus, batch, mix, cfg.aam, LossTerms{});
    const double total = g.loss_total.item();
    if (!std::isfinite(total) || !std::isfinite(g.objective.item()))
      throw DivergenceError(std::string(VariantName(cfg.variant)) + ": non-finite loss at step " +
                            std::to_string(step));
    tape.Backward(g.objective);
    grad::SgdStep(all, sgd);
    model.log.loss_total.push_back(total);
    model.log.loss_speaker.push_back(g.loss_speaker.item());
    model.log.loss_gender.push_back(g.loss_gender.item());
  }
  for (auto* p : backbone) p->frozen = false;
  model.log.speaker_train_accuracy = SpeakerAccuracy(model, corpus);
  model.log.gender_train_accuracy = GenderAccuracy(model, corpus);
  return model;
}

std::vector<Tensor> ForwardLayers(const SpeakerModel& model, const Tensor& frames) {
  if (frames.rank() != 2 || frames.cols() != model.dims.frame_dim)
    throw DataError("frames of shape " + grad::ShapeString(frames.shape()) +
                    " do not match frame_dim " + std::to_string(model.dims.frame_dim));
  std::vector<Tensor> outs;
  const std::size_t steps = frames.rows();
  const Tensor* in = &frames;
  const std::size_t depth = model.layer_w.size();
  for (std::size_t l = 0; l < depth; ++l) {
    const Tensor& w = model.layer_w[l].value;
    const Tensor& b = model.layer_b[l].value;
    const std::size_t k = w.shape()[0], m = w.shape()[1];
    Tensor out(Shape{steps, m});
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t j = 0; j < m; ++j) out.at(t, j) = b[j];
      for (std::size_t p = 0; p < k; ++p) {
        const double x = in->at(t, p);
        for (std::size_t j = 0; j < m; ++j) out.at(t, j) += x * w.at(p, j);
      }
      if (l + 1 < depth)
        for (std::size_t j = 0; j < m; ++j) out.at(t, j) = std::max(out.at(t, j), 0.0);
    }
    outs.push_back(std::move(out));
    in = &outs.back();
  }
  return outs;
}

std::vector<double> Embed(const SpeakerModel& model, const Tensor& frames) {
  const auto layers = ForwardLayers(model, frames);
  const Tensor& last = layers.back();
  if (last.rows() == 0) throw DataError("empty sequence");
  std::vector<double> e(last.cols(), 0.0);
  for (std::size_t t = 0; t < last.rows(); ++t)
    for (std::size_t j = 0; j < last.cols(); ++j) e[j] += last.at(t, j);
  for (auto& v : e) v /= static_cast<double>(last.rows());
  return e;
}

EmbeddingSet ExtractEmbeddings(const SpeakerModel& model, const Corpus& corpus) {
  EmbeddingSet set;
  set.dimension = model.dims.hidden;
  set.provenance = std::string(VariantName(model.variant));
  set.records.reserve(corpus.utterances.size());
  for (const auto& u : corpus.utterances) {
    auto e = Embed(model, u.frames);
    double norm = 0.0;
    for (double x : e) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& x : e) x /= norm;
    set.records.push_back(EmbeddingRecord{u.id, corpus.SpeakerOf(u).id, u.group,
                                          std::vector<float>(e.begin(), e.end())});
  }
  return set;
}

std::vector<LayerActivationSet> ExtractLayerActivations(const SpeakerModel& model,
                                                        const Corpus& corpus, GroupLabel group) {
  std::vector<const Utterance*> utts;
  for (const auto& u : corpus.utterances)
    if (u.group == group) utts.push_back(&u);
  if (utts.empty())
    throw DataError(std::string("group ") + std::string(GroupName(group)) + " absent from corpus");
  const std::size_t depth = model.layer_w.size();
  std::vector<std::vector<Tensor>> per_utt;
  per_utt.reserve(utts.size());
  std::size_t total_frames = 0;
  for (const auto* u : utts) {
    per_utt.push_back(ForwardLayers(model, u->frames));
    total_frames += u->frames.rows();
  }
  std::vector<LayerActivationSet> out;
  for (std::size_t l = 0; l < depth; ++l) {
    LayerActivationSet a;
    a.layer_index = static_cast<int>(l);
    a.group = group;
    a.neurons = model.layer_w[l].value.shape()[1];
    a.frames = total_frames;
    a.values.assign(a.neurons * a.frames, 0.0);
    std::size_t col = 0;
    for (const auto& layers : per_utt) {
      const Tensor& t = layers[l];
      for (std::size_t f = 0; f < t.rows(); ++f, ++col)
        for (std::size_t i = 0; i < a.neurons; ++i) a.values[i * a.frames + col] = t.at(f, i);
    }
    out.push_back(std::move(a));
  }
  return out;
}

double SpeakerAccuracy(const SpeakerModel& model, const Corpus& corpus) {
  if (corpus.utterances.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& u : corpus.utterances) {
    auto e = Embed(model, u.frames);
    Tensor emb(Shape{1, e.size()}, e);
    Tensor cos = AamCosines(emb, model.speaker_w.value);
    std::size_t best = 0;
    for (std::size_t c = 1; c < cos.cols(); ++c)
      if (cos.at(0, c) > cos.at(0, best)) best = c;
    hits += best == u.speaker_index;
  }
  return static_cast<double>(hits) / static_cast<double>(corpus.utterances.size());
}

double GenderAccuracy(const SpeakerModel& model, const Corpus& corpus) {
  if (corpus.utterances.empty()) return 0.0;
  std::size_t hits = 0;
  const Tensor& w = model.gender_w.value;
  const Tensor& b = model.gender_b.value;
  for (const auto& u : corpus.utterances) {
    auto e = Embed(model, u.frames);
    double norm = 0.0;
    for (double x : e) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& x : e) x /= norm;
    double logit[2] = {b[0], b[1]};
    for (std::size_t j = 0; j < e.size(); ++j) {
      logit[0] += e[j] * w.at(j, 0);
      logit[1] += e[j] * w.at(j, 1);
    }
    const int pred = logit[1] > logit[0] ? 1 : 0;
    hits += pred == GroupCode(u.group);
  }
  return static_cast<double>(hits) / static_cast<double>(corpus.utterances.size());
}

}  // namespace biaudit
