// include/biaudit/fairness.hpp

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
#include <map>
#include <optional>
#include <vector>

#include "biaudit/datamodel.hpp"

namespace biaudit {

struct FdrConfig {
  /// Weight of the false-alarm gap.
  double alpha = 0.5;
  /// Overall-FAR interval (low, high] over which thresholds are evaluated.
  double far_low = 0.001;
  double far_high = 0.1;
  /// Acceptable-discrepancy margin; carried into reports only.
  std::optional<double> epsilon;
  /// Number of FAR targets laid over the range.
  std::size_t grid_points = 200;

  void Validate() const;
};

struct FdrPoint {
  double tau = 0.0;
  double far_overall = 0.0;
  double a = 0.0;  // largest cross-group FAR gap
  double b = 0.0;  // largest cross-group FRR gap
  double fdr = 0.0;
};

/// Ordered by increasing threshold.
using FdrCurve = std::vector<FdrPoint>;

using GroupScores = std::map<GroupLabel, ScoreSet>;

/// Splits by trial group.
GroupScores ScoresByGroup(const ScoreSet& scores);

struct GapPair {
  double a = 0.0;
  double b = 0.0;
};

GapPair AbAtThreshold(const GroupScores& by_group, double tau);

double Fdr(double a, double b, double alpha);

/// Thresholds are nontarget-score quantiles of the pooled system chosen so the
/// overall FAR covers the configured range.
FdrCurve ComputeFdrCurve(const GroupScores& by_group, const FdrConfig& cfg,
                         const ScoreSet& overall);

/// Trapezoidal area under FDR against overall FAR divided by the covered FAR
/// width, so a constant curve integrates to its constant.
double AuFdr(const FdrCurve& curve);

/// Max over neurons of the RMS activation over frames.
double LambdaActivation(const LayerActivationSet& act);
double Fad(double lambda_d1, double lambda_d2);
/// FAD / max(lambda_d1, lambda_d2), with 0/0 taken as 0.
double NormalizedFad(double lambda_d1, double lambda_d2);

enum class FadNormalization {
  kPairMax,          // divide by the larger of the two groups' lambda
  kLayerMaxAcrossModels,  // divide by the largest FAD of the layer over models
};

struct FadRow {
  int layer = 0;
  double lambda_male = 0.0;
  double lambda_female = 0.0;
  double fad = 0.0;
  double nfad = 0.0;
};

/// One row per layer from matching male/female activation sets.
std::vector<FadRow> FadTable(const std::vector<LayerActivationSet>& male,
                             const std::vector<LayerActivationSet>& female);

/// Rewrites nfad of several models' tables with the cross-model layer maximum.
void NormalizeAcrossModels(std::vector<std::vector<FadRow>*> tables);

void WriteFdrCurve(const FdrCurve& curve, std::ostream& out);
void WriteFadTable(const std::vector<FadRow>& rows, std::ostream& out);

}  // namespace biaudit
