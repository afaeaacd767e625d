// include/biaudit/metrics.hpp

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

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "biaudit/datamodel.hpp"

namespace biaudit {

/// One operating point. A trial is accepted iff score >= tau.
struct RocPoint {
  double tau = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

/// Thresholds strictly increasing; FAR non-increasing, FRR non-decreasing.
/// The first and last points sit at -inf and +inf.
using RocCurve = std::vector<RocPoint>;

double CosineScore(std::span<const float> a, std::span<const float> b);
double CosineScore(std::span<const double> a, std::span<const double> b);

ScoreSet ScoreTrials(const EmbeddingSet& embeddings, const TrialList& trials);

RocCurve Roc(const ScoreSet& scores);
/// Same sweep over raw score lists.
RocCurve Roc(std::span<const double> target, std::span<const double> nontarget);

/// FAR and FRR at an arbitrary threshold.
RocPoint RatesAt(const ScoreSet& scores, double tau);

struct EerResult {
  double eer = 0.0;
  double tau = 0.0;
};

/// Intersection of FAR and FRR, linearly interpolated between the two curve
/// points where FAR - FRR changes sign.
EerResult Eer(const RocCurve& curve);

/// Mann-Whitney statistic P(pos > neg) + 0.5 P(tie). Pair counting for up to
/// kAucPairCountLimit scores, rank sums beyond.
inline constexpr std::size_t kAucPairCountLimit = 10000;
double Auc(std::span<const double> positive, std::span<const double> negative);
double AucByPairs(std::span<const double> positive, std::span<const double> negative);
double AucByRanks(std::span<const double> positive, std::span<const double> negative);

/// AUC of trial scores with target trials (positive_class = true) or
/// nontarget trials as the positive class.
double Auc(const ScoreSet& scores, bool positive_class = true);

ScoreSet SubsetByGroup(const ScoreSet& scores, GroupLabel group);

void WriteRoc(const RocCurve& curve, std::ostream& out);
void SaveRoc(const RocCurve& curve, const std::filesystem::path& path);

}  // namespace biaudit
