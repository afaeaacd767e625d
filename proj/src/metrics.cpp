// src/metrics.cpp

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

#include "biaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "biaudit/embedding_io.hpp"
#include "biaudit/error.hpp"

namespace biaudit {

namespace {

template <typename T>
double Cosine(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size())
    throw EvaluationError("cosine: vectors of length " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw EvaluationError("cosine: zero-norm input");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

void SplitClasses(const ScoreSet& scores, std::vector<double>& tgt, std::vector<double>& non) {
  for (const auto& s : scores) (s.trial.is_target ? tgt : non).push_back(s.score);
}

}  // namespace

double CosineScore(std::span<const float> a, std::span<const float> b) { return Cosine(a, b); }
double CosineScore(std::span<const double> a, std::span<const double> b) { return Cosine(a, b); }

ScoreSet ScoreTrials(const EmbeddingSet& embeddings, const TrialList& trials) {
  std::unordered_map<std::string, const EmbeddingRecord*> index;
  index.reserve(embeddings.records.size());
  for (const auto& r : embeddings.records) index.emplace(r.utterance_id, &r);
  auto find = [&](const std::string& id) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("utterance '" + id + "' missing from embeddings");
    return it->second;
  };
  ScoreSet out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    const auto* a = find(t.enroll_utt);
    const auto* b = find(t.test_utt);
    out.push_back(ScoreRecord{t, CosineScore(a->vector, b->vector)});
  }
  return out;
}

RocCurve Roc(std::span<const double> target, std::span<const double> nontarget) {
  if (target.empty() || nontarget.empty())
    throw EvaluationError("need both target and nontarget scores");
  std::vector<double> tgt(target.begin(), target.end());
  std::vector<double> non(nontarget.begin(), nontarget.end());
  std::sort(tgt.begin(), tgt.end());
  std::sort(non.begin(), non.end());
  std::vector<double> taus;
  taus.reserve(tgt.size() + non.size());
  std::merge(tgt.begin(), tgt.end(), non.begin(), non.end(), std::back_inserter(taus));
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

  const double nt = static_cast<double>(tgt.size());
  const double nn = static_cast<double>(non.size());
  RocCurve curve;
  curve.reserve(taus.size() + 2);
  curve.push_back({-std::numeric_limits<double>::infinity(), 1.0, 0.0});
  // Walk both sorted lists: below[t] counts scores strictly less than tau.
  std::size_t tgt_below = 0, non_below = 0;
  for (double tau : taus) {
    while (tgt_below < tgt.size() && tgt[tgt_below] < tau) ++tgt_below;
    while (non_below < non.size() && non[non_below] < tau) ++non_below;
    curve.push_back({tau, static_cast<double>(non.size() - non_below) / nn,
                     static_cast<double>(tgt_below) / nt});
  }
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return curve;
}

RocCurve Roc(const ScoreSet& scores) {
  std::vector<double> tgt, non;
  SplitClasses(scores, tgt, non);
  return Roc(tgt, non);
}

RocPoint RatesAt(const ScoreSet& scores, double tau) {
  std::size_t nt = 0, nn = 0, rejected = 0, accepted = 0;
  for (const auto& s : scores) {
    if (s.trial.is_target) {
      ++nt;
      rejected += s.score < tau;
    } else {
      ++nn;
      accepted += s.score >= tau;
    }
  }
  if (nt == 0 || nn == 0) throw EvaluationError("need both target and nontarget scores");
  return {tau, static_cast<double>(accepted) / static_cast<double>(nn),
          static_cast<double>(rejected) / static_cast<double>(nt)};
}

EerResult Eer(const RocCurve& curve) {
  if (curve.size() < 2) throw EvaluationError("ROC curve needs at least two points");
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double d0 = curve[i].far - curve[i].frr;
    const double d1 = curve[i + 1].far - curve[i + 1].frr;
    if (d0 == 0.0) return {curve[i].far, curve[i].tau};
    if (d0 > 0.0 && d1 <= 0.0) {
      const double w = d0 / (d0 - d1);
      const double eer = curve[i].far + w * (curve[i + 1].far - curve[i].far);
      const double t0 = curve[i].tau, t1 = curve[i + 1].tau;
      double tau;
      if (std::isinf(t0))
        tau = t1;
      else if (std::isinf(t1))
        tau = t0;
      else
        tau = t0 + w * (t1 - t0);
      return {eer, tau};
    }
  }
  const auto& last = curve.back();
  return {last.far, last.tau};
}

double AucByPairs(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw EvaluationError("AUC needs both classes");
  // Integer counts of wins and ties keep the result exact up to one division.
  std::uint64_t wins = 0, ties = 0;
  for (double p : pos)
    for (double n : neg) {
      wins += p > n;
      ties += p == n;
    }
  return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) /
         (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double AucByRanks(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw EvaluationError("AUC needs both classes");
  std::vector<double> p(pos.begin(), pos.end()), n(neg.begin(), neg.end());
  std::sort(p.begin(), p.end());
  std::sort(n.begin(), n.end());
  // For each positive, count negatives strictly below and equal. Twice the
  // statistic is an integer, so it is accumulated exactly.
  std::uint64_t twice = 0;
  std::size_t lo = 0, hi = 0;
  for (double v : p) {
    while (lo < n.size() && n[lo] < v) ++lo;
    if (hi < lo) hi = lo;
    while (hi < n.size() && n[hi] == v) ++hi;
    twice += 2 * lo + (hi - lo);
  }
  return static_cast<double>(twice) /
         (2.0 * static_cast<double>(p.size()) * static_cast<double>(n.size()));
}

double Auc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.size() + neg.size() <= kAucPairCountLimit) return AucByPairs(pos, neg);
  return AucByRanks(pos, neg);
}

double Auc(const ScoreSet& scores, bool positive_class) {
  std::vector<double> tgt, non;
  SplitClasses(scores, tgt, non);
  return positive_class ? Auc(tgt, non) : Auc(non, tgt);
}

ScoreSet SubsetByGroup(const ScoreSet& scores, GroupLabel group) {
  ScoreSet out;
  std::copy_if(scores.begin(), scores.end(), std::back_inserter(out),
               [group](const ScoreRecord& s) { return s.trial.group == group; });
  if (out.empty()) throw EvaluationError(std::string("group absent: ") + std::string(GroupName(group)));
  return out;
}

void WriteRoc(const RocCurve& curve, std::ostream& out) {
  out << "tau,far,frr\n";
  for (const auto& p : curve)
    out << FormatReal(p.tau) << ',' << FormatReal(p.far) << ',' << FormatReal(p.frr) << '\n';
}

void SaveRoc(const RocCurve& curve, const std::filesystem::path& path) {
  std::ostringstream ss;
  WriteRoc(curve, ss);
  WriteFileBytes(path, ss.str());
}

}  // namespace biaudit
