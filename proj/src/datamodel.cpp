// src/datamodel.cpp

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

#include "biaudit/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "biaudit/error.hpp"
#include "biaudit/rng.hpp"

namespace biaudit {

std::string_view GroupName(GroupLabel g) {
  return g == GroupLabel::kMale ? "male" : "female";
}

int GroupCode(GroupLabel g) { return static_cast<int>(g); }

std::optional<GroupLabel> ParseGroup(std::string_view text) {
  if (text == "0" || text == "male") return GroupLabel::kMale;
  if (text == "1" || text == "female") return GroupLabel::kFemale;
  return std::nullopt;
}

const EmbeddingRecord* EmbeddingSet::Find(std::string_view utterance_id) const {
  for (const auto& r : records)
    if (r.utterance_id == utterance_id) return &r;
  return nullptr;
}

std::vector<std::string> EmbeddingSet::Speakers() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.speaker_id).second) out.push_back(r.speaker_id);
  return out;
}

std::size_t ValidationReport::Count(ViolationKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      violations.begin(), violations.end(),
      [kind](const Violation& v) { return v.kind == kind; }));
}

std::string_view ViolationName(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kDuplicateId: return "duplicate id";
    case ViolationKind::kDimensionMismatch: return "dimension mismatch";
    case ViolationKind::kInconsistentGroup: return "inconsistent group";
    case ViolationKind::kNonFinite: return "non-finite";
  }
  return "unknown";
}

ValidationReport ValidateDataset(const EmbeddingSet& set) {
  ValidationReport report;
  std::unordered_set<std::string> ids;
  std::map<std::string, GroupLabel> speaker_group;
  std::set<std::string> flagged_speakers;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    const auto& r = set.records[i];
    if (!ids.insert(r.utterance_id).second)
      report.violations.push_back(
          {ViolationKind::kDuplicateId, "utterance '" + r.utterance_id + "' repeated"});
    if (r.vector.size() != set.dimension)
      report.violations.push_back(
          {ViolationKind::kDimensionMismatch,
           "record " + std::to_string(i) + " has length " +
               std::to_string(r.vector.size()) + ", expected " +
               std::to_string(set.dimension)});
    auto [it, inserted] = speaker_group.emplace(r.speaker_id, r.group);
    if (!inserted && it->second != r.group &&
        flagged_speakers.insert(r.speaker_id).second)
      report.violations.push_back({ViolationKind::kInconsistentGroup,
                                   "speaker '" + r.speaker_id + "' has both groups"});
    if (std::any_of(r.vector.begin(), r.vector.end(),
                    [](float x) { return !std::isfinite(x); }))
      report.violations.push_back(
          {ViolationKind::kNonFinite, "record '" + r.utterance_id + "'"});
  }
  return report;
}

namespace {

EmbeddingSet EmptyLike(const EmbeddingSet& set) {
  EmbeddingSet out;
  out.dimension = set.dimension;
  out.provenance = set.provenance;
  return out;
}

}  // namespace

DatasetSplit SplitBySpeaker(const EmbeddingSet& set, const SplitFractions& f,
                            std::uint64_t seed) {
  if (!(f.train > 0 && f.dev > 0 && f.test > 0) ||
      std::abs(f.train + f.dev + f.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must be positive and sum to 1");
  std::vector<std::string> speakers = set.Speakers();
  const std::size_t n = speakers.size();
  if (n < 3) throw DataError("insufficient speakers: need at least 3, got " +
                             std::to_string(n));
  // Sorting first makes the result independent of record order.
  std::sort(speakers.begin(), speakers.end());
  Rng rng(seed);
  rng.Shuffle(speakers);

  auto n_dev = static_cast<std::size_t>(std::llround(f.dev * static_cast<double>(n)));
  auto n_test = static_cast<std::size_t>(std::llround(f.test * static_cast<double>(n)));
  n_dev = std::clamp<std::size_t>(n_dev, 1, n - 2);
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1 - n_dev);
  const std::size_t n_train = n - n_dev - n_test;

  std::unordered_map<std::string, int> which;
  for (std::size_t i = 0; i < n; ++i)
    which[speakers[i]] = i < n_train ? 0 : (i < n_train + n_dev ? 1 : 2);

  DatasetSplit out{EmptyLike(set), EmptyLike(set), EmptyLike(set)};
  for (const auto& r : set.records) {
    switch (which[r.speaker_id]) {
      case 0: out.train.records.push_back(r); break;
      case 1: out.dev.records.push_back(r); break;
      default: out.test.records.push_back(r); break;
    }
  }
  return out;
}

TrialList MakeTrials(const EmbeddingSet& set, const TrialOptions& opt) {
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < set.records.size(); ++i)
    by_speaker[set.records[i].speaker_id].push_back(i);

  std::vector<std::pair<std::size_t, std::size_t>> target_pool;
  for (const auto& [spk, idx] : by_speaker)
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a + 1; b < idx.size(); ++b)
        target_pool.emplace_back(idx[a], idx[b]);
  if (opt.n_target > target_pool.size())
    throw DataError("insufficient data: " + std::to_string(opt.n_target) +
                    " target trials requested, " +
                    std::to_string(target_pool.size()) + " available");

  // Nontarget candidates are counted in closed form, then drawn by rejection.
  const auto& recs = set.records;
  auto admissible = [&](std::size_t a, std::size_t b) {
    return recs[a].speaker_id != recs[b].speaker_id &&
           (opt.allow_cross_group || recs[a].group == recs[b].group);
  };
  std::size_t n_pairs = 0;
  {
    std::map<GroupLabel, std::size_t> per_group;
    std::size_t total = recs.size();
    std::size_t same_speaker = 0;
    for (const auto& [spk, idx] : by_speaker) {
      same_speaker += idx.size() * (idx.size() - 1) / 2;
      per_group[recs[idx.front()].group] += idx.size();
    }
    if (opt.allow_cross_group) {
      n_pairs = total * (total - 1) / 2 - same_speaker;
    } else {
      for (const auto& [g, c] : per_group) n_pairs += c * (c - 1) / 2;
      n_pairs -= same_speaker;
    }
  }
  if (opt.n_nontarget > n_pairs)
    throw DataError("insufficient data: " + std::to_string(opt.n_nontarget) +
                    " nontarget trials requested, " + std::to_string(n_pairs) +
                    " available");

  Rng rng(opt.seed);
  TrialList trials;
  trials.reserve(opt.n_target + opt.n_nontarget);
  auto emit = [&](std::size_t a, std::size_t b, bool target) {
    if (rng.Uniform() < 0.5) std::swap(a, b);
    trials.push_back(Trial{recs[a].utterance_id, recs[b].utterance_id, target,
                           recs[a].group});
  };

  for (std::size_t k : rng.SampleWithoutReplacement(target_pool.size(), opt.n_target))
    emit(target_pool[k].first, target_pool[k].second, true);

  if (opt.n_nontarget * 2 > n_pairs) {
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    pool.reserve(n_pairs);
    for (std::size_t a = 0; a < recs.size(); ++a)
      for (std::size_t b = a + 1; b < recs.size(); ++b)
        if (admissible(a, b)) pool.emplace_back(a, b);
    for (std::size_t k : rng.SampleWithoutReplacement(pool.size(), opt.n_nontarget))
      emit(pool[k].first, pool[k].second, false);
  } else {
    std::set<std::pair<std::size_t, std::size_t>> used;
    while (trials.size() < opt.n_target + opt.n_nontarget) {
      std::size_t a = rng.Index(recs.size());
      std::size_t b = rng.Index(recs.size());
      if (a == b || !admissible(a, b)) continue;
      if (!used.emplace(std::min(a, b), std::max(a, b)).second) continue;
      emit(a, b, false);
    }
  }
  return trials;
}

}  // namespace biaudit
