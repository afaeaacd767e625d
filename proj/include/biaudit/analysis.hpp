// include/biaudit/analysis.hpp

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
#include <string>
#include <vector>

#include "biaudit/attacks.hpp"
#include "biaudit/datamodel.hpp"
#include "biaudit/fairness.hpp"
#include "json.hpp"

namespace biaudit {

struct PcaModel {
  std::vector<double> mean;
  /// components[i] is a unit vector of length d.
  std::vector<std::vector<double>> components;
  /// Non-increasing, non-negative.
  std::vector<double> eigenvalues;
  std::size_t iterations = 0;
  bool used_fallback = false;
};

struct PcaOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 1000;
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues are
/// returned in descending order with matching unit eigenvectors.
struct SymmetricEigen {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};
SymmetricEigen JacobiEigen(const std::vector<std::vector<double>>& matrix);

/// Covariance uses the 1/(n-1) normalization.
std::vector<std::vector<double>> Covariance(const EmbeddingSet& set, std::vector<double>* mean);

/// Leading k principal directions of the pooled set.
PcaModel PcaFit(const EmbeddingSet& set, std::size_t k, const PcaOptions& opts = {});

struct ProjectedPoint {
  std::string utterance_id;
  GroupLabel group = GroupLabel::kMale;
  std::vector<double> coords;
};

std::vector<ProjectedPoint> PcaProject(const PcaModel& model, const EmbeddingSet& set);
/// Header utt,group,pc1,pc2; needs at least two components.
void WritePcaCsv(const std::vector<ProjectedPoint>& points, std::ostream& out);

// ---- report ----------------------------------------------------------------

struct ModelReport {
  std::string name;
  std::string run_hash;
  std::string config_hash;
  double eer_overall = 0.0;
  double eer_male = 0.0;
  double eer_female = 0.0;
  double speaker_train_accuracy = 0.0;
  double gender_head_accuracy = 0.0;
  /// alpha -> auFDR.
  std::map<double, double> aufdr;
  FdrCurve fdr_curve;
  std::vector<ProjectedPoint> pca;
  std::vector<FadRow> fad;
};

struct ReportInputs {
  std::string run_hash;
  std::vector<ModelReport> models;
  ThreatReport threats;
  std::string threats_run_hash;
  FdrConfig fdr;
  /// Extra manifest content (configuration, seeds); must be deterministic.
  nlohmann::json extra = nlohmann::json::object();
};

struct ReportBundle {
  std::filesystem::path directory;
  std::vector<std::string> files;  // relative to directory
  nlohmann::json manifest;
};

ReportBundle BuildReport(const ReportInputs& inputs, const std::filesystem::path& out_dir);

}  // namespace biaudit
