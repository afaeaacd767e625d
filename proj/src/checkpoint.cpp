// src/checkpoint.cpp

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

#include "biaudit/checkpoint.hpp"

#include <cstring>

#include "biaudit/embedding_io.hpp"
#include "biaudit/error.hpp"

namespace biaudit {

using grad::Parameter;
using grad::Shape;
using grad::Tensor;
using json = nlohmann::json;

namespace {

constexpr char kCheckpointMagic[16] = {'B', 'I', 'A', 'U', 'D', 'I', 'T', '-',
                                       'C', 'K', 'P', 'T', 0,   0,   0,   0};

void Restore(Parameter& p, const Checkpoint& ck) {
  auto it = ck.tensors.find(p.name);
  if (it == ck.tensors.end()) throw FormatError("checkpoint lacks parameter '" + p.name + "'", 24);
  if (it->second.shape() != p.value.shape())
    throw FormatError("parameter '" + p.name + "' has shape " +
                          grad::ShapeString(it->second.shape()) + ", expected " +
                          grad::ShapeString(p.value.shape()),
                      24);
  p.value = it->second;
}

}  // namespace

std::string SerializeCheckpoint(const json& meta, std::span<const Parameter* const> params) {
  json h = meta;
  auto& list = h["parameters"] = json::array();
  std::uint64_t offset = 0;
  for (const Parameter* p : params) {
    list.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}});
    offset += p->value.size() * sizeof(double);
  }
  const std::string header = h.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t len = header.size();
  out.append(reinterpret_cast<const char*>(&len), 8);
  out += header;
  for (const Parameter* p : params)
    out.append(reinterpret_cast<const char*>(p->value.data().data()),
               p->value.size() * sizeof(double));
  return out;
}

Checkpoint ParseCheckpoint(const std::string& bytes) {
  if (bytes.size() < 24) throw TruncationError("checkpoint shorter than its preamble");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 16) != 0)
    throw FormatError("bad checkpoint magic", 0);
  std::uint64_t len;
  std::memcpy(&len, bytes.data() + 16, 8);
  if (24 + len > bytes.size()) throw TruncationError("checkpoint header extends past end of file");
  Checkpoint ck;
  try {
    ck.header = json::parse(bytes.substr(24, len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(),
                      24 + (e.byte > 0 ? e.byte - 1 : 0));
  }
  const std::uint64_t base = 24 + len;
  try {
    for (const auto& entry : ck.header.at("parameters")) {
      Shape shape = entry.at("shape").get<Shape>();
      const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
      Tensor t(shape);
      const std::uint64_t nbytes = t.size() * sizeof(double);
      if (base + off + nbytes > bytes.size())
        throw TruncationError("parameter '" + entry.at("name").get<std::string>() +
                              "' extends past end of file");
      std::memcpy(t.data().data(), bytes.data() + base + off, nbytes);
      ck.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint parameter table: ") + e.what(), 24);
  }
  return ck;
}

void SaveModel(const SpeakerModel& model, std::uint64_t seed, std::size_t step,
               const std::filesystem::path& path) {
  json meta;
  meta["kind"] = "speaker-model";
  meta["config"] = {{"variant", VariantName(model.variant)},
                    {"frame_dim", model.dims.frame_dim},
                    {"hidden", model.dims.hidden},
                    {"depth", model.dims.depth},
                    {"n_speakers", model.dims.n_speakers},
                    {"config_hash", model.config_hash}};
  meta["seed"] = seed;
  meta["step"] = step;
  meta["metrics"] = {{"speaker_train_accuracy", model.log.speaker_train_accuracy},
                     {"gender_train_accuracy", model.log.gender_train_accuracy}};
  auto last = [](const std::vector<double>& v) { return v.empty() ? 0.0 : v.back(); };
  if (!model.log.loss_total.empty())
    meta["metrics"]["final_loss"] = {last(model.log.loss_total), last(model.log.loss_speaker),
                                     last(model.log.loss_gender)};
  auto params = model.AllParameters();
  WriteFileBytes(path, SerializeCheckpoint(meta, params));
}

SpeakerModel LoadModel(const std::filesystem::path& path) {
  Checkpoint ck = ParseCheckpoint(ReadFileBytes(path));
  try {
    if (ck.header.at("kind").get<std::string>() != "speaker-model")
      throw FormatError("checkpoint does not hold a speaker model", 24);
    const auto& c = ck.header.at("config");
    auto variant = ParseVariant(c.at("variant").get<std::string>());
    if (!variant) throw FormatError("unknown variant in checkpoint", 24);
    ModelDims dims{c.at("frame_dim").get<std::size_t>(), c.at("hidden").get<std::size_t>(),
                   c.at("depth").get<std::size_t>(), c.at("n_speakers").get<std::size_t>()};
    SpeakerModel m = BuildModel(*variant, dims, 0);
    for (auto* p : m.AllParameters()) Restore(*p, ck);
    m.config_hash = c.at("config_hash").get<std::string>();
    if (ck.header.contains("metrics")) {
      m.log.speaker_train_accuracy = ck.header["metrics"].value("speaker_train_accuracy", 0.0);
      m.log.gender_train_accuracy = ck.header["metrics"].value("gender_train_accuracy", 0.0);
      if (ck.header["metrics"].contains("final_loss")) {
        const auto& f = ck.header["metrics"]["final_loss"];
        m.log.loss_total = {f.at(0).get<double>()};
        m.log.loss_speaker = {f.at(1).get<double>()};
        m.log.loss_gender = {f.at(2).get<double>()};
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what(), 24);
  }
}

void SavePretrainModel(PretrainModel& model, const json& config, std::uint64_t seed,
                       std::size_t step, const std::filesystem::path& path) {
  json meta;
  meta["kind"] = "pretrain-model";
  meta["config"] = config;
  meta["config"]["dims"] = {{"frame_dim", model.dims.frame_dim},
                            {"hidden", model.dims.hidden},
                            {"latent_dim", model.dims.latent_dim},
                            {"context_dim", model.dims.context_dim},
                            {"codeword_dim", model.dims.codeword_dim},
                            {"context_radius", model.dims.context_radius},
                            {"n_codebooks", model.codebooks.groups},
                            {"codebook_size", model.codebooks.size}};
  meta["seed"] = seed;
  meta["step"] = step;
  auto params = model.Parameters();
  std::vector<const Parameter*> cparams(params.begin(), params.end());
  WriteFileBytes(path, SerializeCheckpoint(meta, cparams));
}

PretrainModel LoadPretrainModel(const std::filesystem::path& path) {
  Checkpoint ck = ParseCheckpoint(ReadFileBytes(path));
  try {
    if (ck.header.at("kind").get<std::string>() != "pretrain-model")
      throw FormatError("checkpoint does not hold a pre-training model", 24);
    const auto& d = ck.header.at("config").at("dims");
    PretrainDims dims{d.at("frame_dim").get<std::size_t>(), d.at("hidden").get<std::size_t>(),
                      d.at("latent_dim").get<std::size_t>(), d.at("context_dim").get<std::size_t>(),
                      d.at("codeword_dim").get<std::size_t>(),
                      d.at("context_radius").get<std::size_t>()};
    PretrainLossConfig loss;
    loss.n_codebooks = d.at("n_codebooks").get<std::size_t>();
    loss.codebook_size = d.at("codebook_size").get<std::size_t>();
    PretrainModel m = BuildPretrainModel(dims, loss, 0);
    for (auto* p : m.Parameters()) Restore(*p, ck);
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what(), 24);
  }
}

}  // namespace biaudit
