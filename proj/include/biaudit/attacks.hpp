// include/biaudit/attacks.hpp

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

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "biaudit/datamodel.hpp"
#include "biaudit/gradkit.hpp"

namespace biaudit {

enum class ThreatKind { kUninformed, kInformed };

std::string_view ThreatName(ThreatKind kind);  // "uIA" / "IA"

struct AttackerConfig {
  std::size_t hidden_units = 64;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  /// Fraction of training speakers (per gender) held out for model selection.
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void Validate() const;
};

/// Two trainable layers on standardized inputs: linear, ReLU, linear to two
/// logits (male, female).
struct AttackerNet {
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  grad::Parameter w1, b1, w2, b2;
  double validation_auc = 0.0;
  std::size_t best_epoch = 0;

  /// Female logit per record.
  std::vector<double> Score(const EmbeddingSet& set) const;
};

AttackerNet TrainAttacker(const EmbeddingSet& train_set, const AttackerConfig& cfg);

double EvaluateAttack(const AttackerNet& attacker, const EmbeddingSet& test_set);

/// Attacker training and evaluation data for one source model.
struct AttackSource {
  std::string name;
  EmbeddingSet train;  // attacker training speakers
  EmbeddingSet test;   // attack evaluation speakers
};

struct ThreatRow {
  ThreatKind kind = ThreatKind::kUninformed;
  std::string train_source;
  std::string test_source;
  double auc = 0.0;
};

struct ThreatReport {
  std::vector<ThreatRow> rows;
  AttackerConfig config;
};

/// Sources must be given in the order speaker-only, speaker+gender,
/// speaker+gender-adversarial. Rows: (s,s), (s,sga), (sg,sg), (sg,sga) as
/// uninformed attacks, then (sga,sga) as the informed attack. One attacker is
/// trained per distinct training source and shared by the rows that use it.
ThreatReport RunThreatMatrix(const AttackSource& ms, const AttackSource& msg,
                             const AttackSource& msga, const AttackerConfig& cfg);

void WriteThreatReport(const ThreatReport& report, std::ostream& out);

}  // namespace biaudit
