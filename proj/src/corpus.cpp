// src/corpus.cpp

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

#include "biaudit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

#include "biaudit/embedding_io.hpp"
#include "biaudit/error.hpp"
#include "biaudit/rng.hpp"
#include "json.hpp"

namespace biaudit {

using grad::Shape;
using grad::Tensor;

std::size_t Corpus::CountGroup(GroupLabel g) const {
  return static_cast<std::size_t>(std::count_if(
      utterances.begin(), utterances.end(), [g](const Utterance& u) { return u.group == g; }));
}

Corpus Corpus::FilterGroup(GroupLabel g) const {
  Corpus out;
  out.frame_dim = frame_dim;
  out.frames_per_utt = frames_per_utt;
  out.speakers = speakers;
  for (const auto& u : utterances)
    if (u.group == g) out.utterances.push_back(u);
  return out;
}

namespace {

std::string NumberedId(const std::string& prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, i);
  return prefix + buf;
}

}  // namespace

Corpus GenerateCorpus(const CorpusConfig& cfg, std::uint64_t seed) {
  if (cfg.n_speakers < 2) throw ConfigError("corpus needs at least 2 speakers");
  if (cfg.utts_per_speaker < 1 || cfg.frames_per_utt < 1 || cfg.frame_dim < 1)
    throw ConfigError("corpus sizes must be positive");
  if (cfg.gender_dims > cfg.frame_dim)
    throw ConfigError("gender subspace larger than frame dimension");
  if (!(cfg.gender_balance > 0.0 && cfg.gender_balance < 1.0))
    throw ConfigError("gender_balance must lie in (0, 1)");

  Rng rng(seed);
  Corpus c;
  c.frame_dim = cfg.frame_dim;
  c.frames_per_utt = cfg.frames_per_utt;

  const auto n_male = static_cast<std::size_t>(
      std::llround(cfg.gender_balance * static_cast<double>(cfg.n_speakers)));
  std::vector<GroupLabel> groups(cfg.n_speakers, GroupLabel::kFemale);
  std::fill_n(groups.begin(), std::min(n_male, cfg.n_speakers), GroupLabel::kMale);
  rng.Shuffle(groups);

  // Unit direction spanning the gender subspace (first gender_dims coordinates).
  const double gscale =
      cfg.gender_dims ? 1.0 / std::sqrt(static_cast<double>(cfg.gender_dims)) : 0.0;
  const int width = cfg.n_speakers > 999 ? 5 : 3;
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    Speaker spk{NumberedId(cfg.id_prefix, s, width), groups[s]};
    std::vector<double> mean(cfg.frame_dim);
    const double sign = groups[s] == GroupLabel::kFemale ? 1.0 : -1.0;
    for (std::size_t j = 0; j < cfg.frame_dim; ++j) {
      mean[j] = cfg.speaker_spread * rng.Normal();
      if (j < cfg.gender_dims) mean[j] += sign * cfg.gender_offset * gscale;
    }
    for (std::size_t u = 0; u < cfg.utts_per_speaker; ++u) {
      Utterance utt;
      utt.id = spk.id + "-" + NumberedId("u", u, 3);
      utt.speaker_index = s;
      utt.group = spk.group;
      std::vector<double> session(cfg.frame_dim);
      for (auto& v : session) v = cfg.utterance_noise * rng.Normal();
      utt.frames = Tensor(Shape{cfg.frames_per_utt, cfg.frame_dim});
      for (std::size_t t = 0; t < cfg.frames_per_utt; ++t)
        for (std::size_t j = 0; j < cfg.frame_dim; ++j)
          utt.frames.at(t, j) = mean[j] + session[j] + cfg.frame_noise * rng.Normal();
      c.utterances.push_back(std::move(utt));
    }
    c.speakers.push_back(std::move(spk));
  }
  return c;
}

std::vector<Tensor> GeneratePretrainSequences(std::size_t count, std::size_t steps,
                                              std::size_t frame_dim, std::uint64_t seed) {
  constexpr std::size_t kSources = 4;
  Rng rng(seed);
  std::vector<double> mixing(kSources * frame_dim);
  for (auto& v : mixing) v = rng.Normal() / std::sqrt(static_cast<double>(kSources));
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    double freq[kSources], phase[kSources];
    for (std::size_t k = 0; k < kSources; ++k) {
      freq[k] = rng.Uniform(0.05, 0.25);
      phase[k] = rng.Uniform(0.0, 2.0 * std::numbers::pi);
    }
    Tensor seq(Shape{steps, frame_dim});
    for (std::size_t t = 0; t < steps; ++t) {
      double src[kSources];
      for (std::size_t k = 0; k < kSources; ++k)
        src[k] = std::sin(2.0 * std::numbers::pi * freq[k] * static_cast<double>(t) + phase[k]);
      for (std::size_t j = 0; j < frame_dim; ++j) {
        double v = 0.1 * rng.Normal();
        for (std::size_t k = 0; k < kSources; ++k) v += src[k] * mixing[k * frame_dim + j];
        seq.at(t, j) = v;
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

namespace {

constexpr char kCorpusMagic[16] = {'B', 'I', 'A', 'U', 'D', 'I', 'T', '-',
                                   'C', 'R', 'P', 0,   0,   0,   0,   0};

}  // namespace

void SaveCorpus(const Corpus& corpus, const std::filesystem::path& path) {
  nlohmann::json h;
  h["format"] = "biaudit-corpus";
  h["version"] = 1;
  h["frame_dim"] = corpus.frame_dim;
  h["frames_per_utt"] = corpus.frames_per_utt;
  auto& spk = h["speakers"] = nlohmann::json::array();
  for (const auto& s : corpus.speakers) spk.push_back({s.id, GroupCode(s.group)});
  auto& utts = h["utterances"] = nlohmann::json::array();
  for (const auto& u : corpus.utterances) utts.push_back({u.id, u.speaker_index});
  const std::string header = h.dump();

  std::string out(kCorpusMagic, sizeof(kCorpusMagic));
  const auto len = static_cast<std::uint32_t>(header.size());
  out.append(reinterpret_cast<const char*>(&len), 4);
  out += header;
  for (const auto& u : corpus.utterances) {
    if (u.frames.shape() != Shape{corpus.frames_per_utt, corpus.frame_dim})
      throw DataError("utterance '" + u.id + "' has frames of shape " +
                      grad::ShapeString(u.frames.shape()));
    out.append(reinterpret_cast<const char*>(u.frames.data().data()),
               u.frames.size() * sizeof(double));
  }
  WriteFileBytes(path, out);
}

Corpus LoadCorpus(const std::filesystem::path& path) {
  const std::string bytes = ReadFileBytes(path);
  if (bytes.size() < 20) throw TruncationError("corpus file shorter than its preamble");
  if (std::memcmp(bytes.data(), kCorpusMagic, 16) != 0) throw FormatError("bad corpus magic", 0);
  std::uint32_t len;
  std::memcpy(&len, bytes.data() + 16, 4);
  if (20 + static_cast<std::uint64_t>(len) > bytes.size())
    throw TruncationError("corpus header extends past end of file");
  Corpus c;
  std::size_t n_utts = 0;
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(20, len));
    if (h.at("format").get<std::string>() != "biaudit-corpus")
      throw FormatError("unexpected corpus format tag", 20);
    c.frame_dim = h.at("frame_dim").get<std::size_t>();
    c.frames_per_utt = h.at("frames_per_utt").get<std::size_t>();
    for (const auto& s : h.at("speakers")) {
      auto g = ParseGroup(std::to_string(s.at(1).get<int>()));
      if (!g) throw FormatError("bad speaker group", 20);
      c.speakers.push_back(Speaker{s.at(0).get<std::string>(), *g});
    }
    n_utts = h.at("utterances").size();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corpus header: ") + e.what(), 20);
  }
  const std::size_t per = c.frames_per_utt * c.frame_dim;
  std::size_t off = 20 + len;
  if (off + n_utts * per * sizeof(double) > bytes.size())
    throw TruncationError("corpus payload holds fewer frames than the header declares");
  for (const auto& u : h["utterances"]) {
    Utterance utt;
    utt.id = u.at(0).get<std::string>();
    utt.speaker_index = u.at(1).get<std::size_t>();
    if (utt.speaker_index >= c.speakers.size())
      throw FormatError("utterance '" + utt.id + "' references unknown speaker", 20);
    utt.group = c.speakers[utt.speaker_index].group;
    std::vector<double> data(per);
    std::memcpy(data.data(), bytes.data() + off, per * sizeof(double));
    off += per * sizeof(double);
    utt.frames = Tensor(Shape{c.frames_per_utt, c.frame_dim}, std::move(data));
    c.utterances.push_back(std::move(utt));
  }
  return c;
}

}  // namespace biaudit
