// src/fairness.cpp

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

#include "biaudit/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "biaudit/embedding_io.hpp"
#include "biaudit/error.hpp"
#include "biaudit/metrics.hpp"

namespace biaudit {

void FdrConfig::Validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("FDR alpha must lie in [0, 1]");
  if (!(far_low >= 0.0 && far_low < far_high && far_high <= 1.0))
    throw ConfigError("FAR range must satisfy 0 <= low < high <= 1");
  if (grid_points < 2) throw ConfigError("FDR grid needs at least 2 points");
}

GroupScores ScoresByGroup(const ScoreSet& scores) {
  GroupScores out;
  for (const auto& s : scores) out[s.trial.group].push_back(s);
  return out;
}

GapPair AbAtThreshold(const GroupScores& by_group, double tau) {
  if (by_group.size() < 2) throw EvaluationError("fairness needs at least two groups");
  std::vector<RocPoint> rates;
  for (const auto& [g, scores] : by_group) {
    try {
      rates.push_back(RatesAt(scores, tau));
    } catch (const EvaluationError&) {
      throw EvaluationError(std::string("group ") + std::string(GroupName(g)) +
                            " lacks target or nontarget trials");
    }
  }
  GapPair gap;
  for (std::size_t i = 0; i < rates.size(); ++i)
    for (std::size_t j = i + 1; j < rates.size(); ++j) {
      gap.a = std::max(gap.a, std::abs(rates[i].far - rates[j].far));
      gap.b = std::max(gap.b, std::abs(rates[i].frr - rates[j].frr));
    }
  return gap;
}

double Fdr(double a, double b, double alpha) { return 1.0 - (alpha * a + (1.0 - alpha) * b); }

FdrCurve ComputeFdrCurve(const GroupScores& by_group, const FdrConfig& cfg,
                         const ScoreSet& overall) {
  cfg.Validate();
  std::vector<double> non;
  for (const auto& s : overall)
    if (!s.trial.is_target) non.push_back(s.score);
  if (non.empty()) throw EvaluationError("need both target and nontarget scores");
  std::sort(non.begin(), non.end());
  const double n = static_cast<double>(non.size());

  // Target FARs spread evenly over (low, high]; each maps to the nontarget
  // quantile at 1 - FAR, interpolated between order statistics.
  std::vector<double> taus;
  for (std::size_t k = 1; k <= cfg.grid_points; ++k) {
    const double far = cfg.far_low + (cfg.far_high - cfg.far_low) * static_cast<double>(k) /
                                         static_cast<double>(cfg.grid_points);
    const double pos = (1.0 - far) * (n - 1.0);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i);
    const double tau = i + 1 < non.size() ? non[i] + frac * (non[i + 1] - non[i]) : non.back();
    taus.push_back(tau);
  }
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

  FdrCurve curve;
  for (double tau : taus) {
    const double far = RatesAt(overall, tau).far;
    if (!(far > cfg.far_low && far <= cfg.far_high)) continue;
    const GapPair gap = AbAtThreshold(by_group, tau);
    curve.push_back({tau, far, gap.a, gap.b, Fdr(gap.a, gap.b, cfg.alpha)});
  }
  if (curve.empty()) throw EvaluationError("empty FAR range");
  return curve;
}

double AuFdr(const FdrCurve& curve) {
  if (curve.size() < 2) throw EvaluationError("auFDR needs at least two curve points");
  double area = 0.0;
  double lo = curve.front().far_overall, hi = lo;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double w = std::abs(curve[i + 1].far_overall - curve[i].far_overall);
    area += 0.5 * w * (curve[i].fdr + curve[i + 1].fdr);
    lo = std::min(lo, curve[i + 1].far_overall);
    hi = std::max(hi, curve[i + 1].far_overall);
  }
  if (!(hi > lo)) throw EvaluationError("auFDR: curve covers zero FAR width");
  return area / (hi - lo);
}

double LambdaActivation(const LayerActivationSet& act) {
  if (act.neurons == 0 || act.frames == 0 || act.values.size() != act.neurons * act.frames)
    throw EvaluationError("empty activation matrix");
  double best = 0.0;
  for (std::size_t i = 0; i < act.neurons; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < act.frames; ++j) ss += act.at(i, j) * act.at(i, j);
    best = std::max(best, std::sqrt(ss / static_cast<double>(act.frames)));
  }
  return best;
}

double Fad(double l1, double l2) {
  if (l1 < 0.0 || l2 < 0.0) throw EvaluationError("FAD inputs must be non-negative");
  return std::abs(l1 - l2);
}

double NormalizedFad(double l1, double l2) {
  const double f = Fad(l1, l2);
  const double m = std::max(l1, l2);
  return m > 0.0 ? f / m : 0.0;
}

std::vector<FadRow> FadTable(const std::vector<LayerActivationSet>& male,
                             const std::vector<LayerActivationSet>& female) {
  if (male.size() != female.size())
    throw EvaluationError("male and female activations cover different layer counts");
  std::vector<FadRow> rows;
  for (std::size_t l = 0; l < male.size(); ++l) {
    FadRow r;
    r.layer = male[l].layer_index;
    r.lambda_male = LambdaActivation(male[l]);
    r.lambda_female = LambdaActivation(female[l]);
    r.fad = Fad(r.lambda_male, r.lambda_female);
    r.nfad = NormalizedFad(r.lambda_male, r.lambda_female);
    rows.push_back(r);
  }
  return rows;
}

void NormalizeAcrossModels(std::vector<std::vector<FadRow>*> tables) {
  if (tables.empty()) return;
  const std::size_t layers = tables.front()->size();
  for (std::size_t l = 0; l < layers; ++l) {
    double mx = 0.0;
    for (auto* t : tables) mx = std::max(mx, t->at(l).fad);
    for (auto* t : tables) t->at(l).nfad = mx > 0.0 ? t->at(l).fad / mx : 0.0;
  }
}

void WriteFdrCurve(const FdrCurve& curve, std::ostream& out) {
  out << "tau,far_overall,A,B,fdr\n";
  for (const auto& p : curve)
    out << FormatReal(p.tau) << ',' << FormatReal(p.far_overall) << ',' << FormatReal(p.a) << ','
        << FormatReal(p.b) << ',' << FormatReal(p.fdr) << '\n';
}

void WriteFadTable(const std::vector<FadRow>& rows, std::ostream& out) {
  out << "layer,lambda_male,lambda_female,fad,nfad\n";
  for (const auto& r : rows)
    out << r.layer << ',' << FormatReal(r.lambda_male) << ',' << FormatReal(r.lambda_female)
        << ',' << FormatReal(r.fad) << ',' << FormatReal(r.nfad) << '\n';
}

}  // namespace biaudit
