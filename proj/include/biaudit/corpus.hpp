// include/biaudit/corpus.hpp

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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "biaudit/datamodel.hpp"
#include "biaudit/gradkit.hpp"

namespace biaudit {

struct Utterance {
  std::string id;
  std::size_t speaker_index = 0;
  GroupLabel group = GroupLabel::kMale;
  grad::Tensor frames;  // [T, frame_dim]
};

struct Speaker {
  std::string id;
  GroupLabel group = GroupLabel::kMale;
};

/// Labelled frame-sequence corpus.
struct Corpus {
  std::size_t frame_dim = 0;
  std::size_t frames_per_utt = 0;
  std::vector<Speaker> speakers;
  std::vector<Utterance> utterances;

  const Speaker& SpeakerOf(const Utterance& u) const { return speakers[u.speaker_index]; }
  std::size_t CountGroup(GroupLabel g) const;
  Corpus FilterGroup(GroupLabel g) const;
};

/// Synthetic speaker corpus. Each speaker is a Gaussian cluster in frame
/// space; speakers of the two groups are shifted by +-gender_offset along a
/// dedicated subspace of `gender_dims` coordinates.
struct CorpusConfig {
  std::size_t n_speakers = 40;
  std::size_t utts_per_speaker = 20;
  std::size_t frames_per_utt = 16;
  std::size_t frame_dim = 24;
  std::size_t gender_dims = 4;
  double gender_offset = 2.0;
  /// Fraction of male speakers.
  double gender_balance = 0.614;
  double speaker_spread = 1.0;
  double utterance_noise = 0.3;
  double frame_noise = 1.0;
  std::string id_prefix = "spk";
};

Corpus GenerateCorpus(const CorpusConfig& cfg, std::uint64_t seed);

/// Smooth random trajectories for the pre-training simulation: a handful of
/// sinusoids with random frequencies and phases, mixed into frame space.
std::vector<grad::Tensor> GeneratePretrainSequences(std::size_t count, std::size_t steps,
                                                    std::size_t frame_dim, std::uint64_t seed);

/// Corpus container: 16-byte magic "BIAUDIT-CRP", u32 header length, JSON
/// header (dimensions, speakers, utterance ids and labels), then every
/// utterance's frames as little-endian f64 in utterance order.
void SaveCorpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus LoadCorpus(const std::filesystem::path& path);

}  // namespace biaudit
