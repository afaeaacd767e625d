// src/attacks.cpp

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

#include "biaudit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include "biaudit/embedding_io.hpp"
#include "biaudit/error.hpp"
#include "biaudit/metrics.hpp"
#include "biaudit/rng.hpp"

namespace biaudit {

namespace g = grad;

std::string_view ThreatName(ThreatKind kind) {
  return kind == ThreatKind::kInformed ? "IA" : "uIA";
}

void AttackerConfig::Validate() const {
  if (hidden_units == 0 || epochs == 0 || batch_size == 0)
    throw ConfigError("attacker sizes must be positive");
  if (!(learning_rate > 0.0) || momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("attacker optimizer settings out of range");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("attacker validation fraction must lie in (0, 1)");
}

namespace {

void RequireBothGenders(const EmbeddingSet& set, const char* what) {
  bool seen[2] = {false, false};
  for (const auto& r : set.records) seen[GroupCode(r.group)] = true;
  if (!seen[0] || !seen[1])
    throw DataError(std::string(what) + " must contain both genders");
}

g::Tensor Standardize(const AttackerNet& net, const EmbeddingSet& set,
                      std::span<const std::size_t> rows) {
  const std::size_t d = net.feature_mean.size();
  g::Tensor x({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = set.records[rows[i]].vector;
    if (v.size() != d) throw DataError("attack embedding dimension mismatch");
    for (std::size_t j = 0; j < d; ++j)
      x.at(i, j) = (static_cast<double>(v[j]) - net.feature_mean[j]) / net.feature_scale[j];
  }
  return x;
}

std::vector<double> FemaleLogits(const AttackerNet& net, const g::Tensor& x) {
  const std::size_t h = net.w1.value.cols();
  std::vector<double> out(x.rows());
  std::vector<double> hid(h);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < h; ++k) {
      double s = net.b1.value[k];
      for (std::size_t j = 0; j < x.cols(); ++j) s += x.at(i, j) * net.w1.value.at(j, k);
      hid[k] = std::max(s, 0.0);
    }
    double f = net.b2.value[1];
    for (std::size_t k = 0; k < h; ++k) f += hid[k] * net.w2.value.at(k, 1);
    out[i] = f;
  }
  return out;
}

double AucOf(const std::vector<double>& scores, const EmbeddingSet& set,
             std::span<const std::size_t> rows) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < rows.size(); ++i)
    (set.records[rows[i]].group == GroupLabel::kFemale ? pos : neg).push_back(scores[i]);
  return Auc(pos, neg);
}

g::Parameter Uniform(const std::string& name, std::size_t fan_in, g::Shape shape, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  g::Tensor t(shape);
  for (auto& v : t.storage()) v = rng.Uniform(-bound, bound);
  return g::Parameter(name, std::move(t));
}

}  // namespace

std::vector<double> AttackerNet::Score(const EmbeddingSet& set) const {
  std::vector<std::size_t> rows(set.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return FemaleLogits(*this, Standardize(*this, set, rows));
}

AttackerNet TrainAttacker(const EmbeddingSet& train_set, const AttackerConfig& cfg) {
  cfg.Validate();
  RequireBothGenders(train_set, "attacker training set");
  const std::size_t d = train_set.dimension;
  if (d == 0) throw DataError("attacker training set has zero dimension");

  // Speaker-disjoint validation split, drawn per gender so both classes are
  // represented on each side.
  std::map<std::string, GroupLabel> speaker_group;
  for (const auto& r : train_set.records) speaker_group.emplace(r.speaker_id, r.group);
  Rng split_rng(DeriveSeed(cfg.seed, "attacker-split"));
  std::set<std::string> held_out;
  for (GroupLabel grp : kAllGroups) {
    std::vector<std::string> ids;
    for (const auto& [id, gl] : speaker_group)
      if (gl == grp) ids.push_back(id);
    if (ids.size() < 2)
      throw DataError("attacker training needs at least two speakers per gender");
    split_rng.Shuffle(ids);
    auto n_val = static_cast<std::size_t>(
        std::lround(cfg.validation_fraction * static_cast<double>(ids.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
    held_out.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  }
  std::vector<std::size_t> fit_rows, val_rows;
  for (std::size_t i = 0; i < train_set.size(); ++i)
    (held_out.count(train_set.records[i].speaker_id) ? val_rows : fit_rows).push_back(i);
  // Canonical row order makes training independent of the record order.
  auto by_id = [&](std::size_t a, std::size_t b) {
    return train_set.records[a].utterance_id < train_set.records[b].utterance_id;
  };
  std::sort(fit_rows.begin(), fit_rows.end(), by_id);
  std::sort(val_rows.begin(), val_rows.end(), by_id);

  AttackerNet net;
  net.feature_mean.assign(d, 0.0);
  net.feature_scale.assign(d, 0.0);
  for (std::size_t i : fit_rows)
    for (std::size_t j = 0; j < d; ++j) net.feature_mean[j] += train_set.records[i].vector[j];
  for (auto& m : net.feature_mean) m /= static_cast<double>(fit_rows.size());
  for (std::size_t i : fit_rows)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = train_set.records[i].vector[j] - net.feature_mean[j];
      net.feature_scale[j] += c * c;
    }
  for (auto& s : net.feature_scale) {
    s = std::sqrt(s / static_cast<double>(fit_rows.size()));
    if (!(s > 1e-12)) s = 1.0;  // constant feature
  }

  Rng init_rng(DeriveSeed(cfg.seed, "attacker-init"));
  const std::size_t h = cfg.hidden_units;
  net.w1 = Uniform("attacker.w1", d, {d, h}, init_rng);
  net.b1 = g::Parameter("attacker.b1", g::Tensor({h}));
  net.w2 = Uniform("attacker.w2", h, {h, 2}, init_rng);
  net.b2 = g::Parameter("attacker.b2", g::Tensor({2}));

  const g::Tensor x_fit = Standardize(net, train_set, fit_rows);
  const g::Tensor x_val = Standardize(net, train_set, val_rows);
  std::vector<int> labels(fit_rows.size());
  for (std::size_t i = 0; i < fit_rows.size(); ++i)
    labels[i] = GroupCode(train_set.records[fit_rows[i]].group);

  AttackerNet best = net;
  best.validation_auc = -1.0;
  Rng batch_rng(DeriveSeed(cfg.seed, "attacker-batches"));
  std::vector<std::size_t> order(fit_rows.size());
  std::vector<g::Parameter*> params = {&net.w1, &net.b1, &net.w2, &net.b2};
  const g::SgdConfig sgd{cfg.learning_rate, cfg.momentum};

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    batch_rng.Shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      g::Tensor xb({n, d});
      std::vector<int> yb(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = order[start + i];
        for (std::size_t j = 0; j < d; ++j) xb.at(i, j) = x_fit.at(r, j);
        yb[i] = labels[r];
      }
      g::Tape tape;
      auto hid = g::Relu(g::Linear(tape.Input(std::move(xb)), tape.Param(net.w1),
                                   tape.Param(net.b1)));
      auto logits = g::Linear(hid, tape.Param(net.w2), tape.Param(net.b2));
      auto loss = g::CrossEntropy(logits, yb, g::Reduction::kMean);
      if (!std::isfinite(loss.item())) throw DivergenceError("attacker loss is not finite");
      tape.Backward(loss);
      g::SgdStep(params, sgd);
    }
    const double auc = AucOf(FemaleLogits(net, x_val), train_set, val_rows);
    if (auc > best.validation_auc) {
      best = net;
      best.validation_auc = auc;
      best.best_epoch = epoch;
    }
  }
  for (auto* p : {&best.w1, &best.b1, &best.w2, &best.b2}) {
    p->ZeroGrad();
    p->velocity.Fill(0.0);
  }
  return best;
}

double EvaluateAttack(const AttackerNet& attacker, const EmbeddingSet& test_set) {
  RequireBothGenders(test_set, "attack test set");
  const auto scores = attacker.Score(test_set);
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (test_set.records[i].group == GroupLabel::kFemale ? pos : neg).push_back(scores[i]);
  return Auc(pos, neg);
}

namespace {

void RequireDisjoint(const AttackSource& src) {
  const auto train = src.train.Speakers();
  const auto test_ids = src.test.Speakers();
  const std::set<std::string> test(test_ids.begin(), test_ids.end());
  for (const auto& s : train)
    if (test.count(s))
      throw DataError("attacker train and test speakers overlap in " + src.name + ": " + s);
}

}  // namespace

ThreatReport RunThreatMatrix(const AttackSource& ms, const AttackSource& msg,
                             const AttackSource& msga, const AttackerConfig& cfg) {
  for (const auto* s : {&ms, &msg, &msga}) RequireDisjoint(*s);
  auto speaker_set = [](const EmbeddingSet& e) {
    const auto v = e.Speakers();
    return std::set<std::string>(v.begin(), v.end());
  };
  const auto eval_speakers = speaker_set(ms.test);
  if (speaker_set(msg.test) != eval_speakers || speaker_set(msga.test) != eval_speakers)
    throw DataError("threat matrix sources must share the evaluation speakers");

  // Same attacker seed for every source so identical inputs give identical
  // attackers.
  const AttackerNet on_ms = TrainAttacker(ms.train, cfg);
  const AttackerNet on_msg = TrainAttacker(msg.train, cfg);
  const AttackerNet on_msga = TrainAttacker(msga.train, cfg);

  ThreatReport report;
  report.config = cfg;
  auto add = [&](ThreatKind kind, const AttackerNet& net, const AttackSource& tr,
                 const AttackSource& te) {
    report.rows.push_back({kind, tr.name, te.name, EvaluateAttack(net, te.test)});
  };
  add(ThreatKind::kUninformed, on_ms, ms, ms);
  add(ThreatKind::kUninformed, on_ms, ms, msga);
  add(ThreatKind::kUninformed, on_msg, msg, msg);
  add(ThreatKind::kUninformed, on_msg, msg, msga);
  add(ThreatKind::kInformed, on_msga, msga, msga);
  return report;
}

void WriteThreatReport(const ThreatReport& report, std::ostream& out) {
  out << "threat_model,train_source,test_source,auc\n";
  for (const auto& r : report.rows)
    out << ThreatName(r.kind) << ',' << r.train_source << ',' << r.test_source << ','
        << FormatReal(r.auc) << '\n';
}

}  // namespace biaudit
