// include/biaudit/datamodel.hpp

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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace biaudit {

/// Demographic group of a speaker. The integer codes are part of every file
/// format and must not change.
enum class GroupLabel : std::uint8_t { kMale = 0, kFemale = 1 };

inline constexpr std::array<GroupLabel, 2> kAllGroups = {GroupLabel::kMale,
                                                         GroupLabel::kFemale};

std::string_view GroupName(GroupLabel g);
int GroupCode(GroupLabel g);
/// Accepts "0"/"1" and "male"/"female".
std::optional<GroupLabel> ParseGroup(std::string_view text);

/// Utterance-level embedding, i.e. the time-mean of the final backbone features.
struct EmbeddingRecord {
  std::string utterance_id;
  std::string speaker_id;
  GroupLabel group = GroupLabel::kMale;
  std::vector<float> vector;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

struct EmbeddingSet {
  std::size_t dimension = 0;
  std::vector<EmbeddingRecord> records;
  std::string provenance;

  std::size_t size() const { return records.size(); }
  const EmbeddingRecord* Find(std::string_view utterance_id) const;
  /// Distinct speaker ids in first-appearance order.
  std::vector<std::string> Speakers() const;

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

struct Trial {
  std::string enroll_utt;
  std::string test_utt;
  bool is_target = false;
  /// Group of the enrollment speaker.
  GroupLabel group = GroupLabel::kMale;

  friend bool operator==(const Trial&, const Trial&) = default;
};

using TrialList = std::vector<Trial>;

struct ScoreRecord {
  Trial trial;
  double score = 0.0;
  GroupLabel group() const { return trial.group; }

  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

using ScoreSet = std::vector<ScoreRecord>;

/// Activations of one layer for one group: rows are neurons, columns frames.
struct LayerActivationSet {
  int layer_index = 0;
  GroupLabel group = GroupLabel::kMale;
  std::size_t neurons = 0;
  std::size_t frames = 0;
  std::vector<double> values;  // row-major, neurons x frames

  double at(std::size_t neuron, std::size_t frame) const {
    return values[neuron * frames + frame];
  }
};

// ---- validation ------------------------------------------------------------

enum class ViolationKind {
  kDuplicateId,
  kDimensionMismatch,
  kInconsistentGroup,
  kNonFinite,
};

struct Violation {
  ViolationKind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::size_t Count(ViolationKind kind) const;
};

std::string_view ViolationName(ViolationKind kind);

ValidationReport ValidateDataset(const EmbeddingSet& set);

// ---- splits and trials -----------------------------------------------------

struct SplitFractions {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  EmbeddingSet train;
  EmbeddingSet dev;
  EmbeddingSet test;
};

/// Partitions by speaker. Speaker counts are rounded from the fractions with
/// every split receiving at least one speaker.
DatasetSplit SplitBySpeaker(const EmbeddingSet& set, const SplitFractions& fractions,
                            std::uint64_t seed);

struct TrialOptions {
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
  std::uint64_t seed = 0;
  /// Nontarget pairs are same-gender unless this is set.
  bool allow_cross_group = false;
};

TrialList MakeTrials(const EmbeddingSet& set, const TrialOptions& options);

}  // namespace biaudit
