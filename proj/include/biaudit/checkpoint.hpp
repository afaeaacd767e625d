// include/biaudit/checkpoint.hpp

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
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include "biaudit/finetune.hpp"
#include "biaudit/gradkit.hpp"
#include "biaudit/pretrain.hpp"
#include "json.hpp"

namespace biaudit {

/// Checkpoint layout: 16-byte magic "BIAUDIT-CKPT", u64 header length, JSON
/// header {kind, config, seed, step, parameters: [{name, shape, offset}]},
/// then every parameter's values as little-endian f64 in header order.
struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, grad::Tensor> tensors;
};

std::string SerializeCheckpoint(const nlohmann::json& meta,
                                 std::span<const grad::Parameter* const> params);
Checkpoint ParseCheckpoint(const std::string& bytes);

void SaveModel(const SpeakerModel& model, std::uint64_t seed, std::size_t step,
               const std::filesystem::path& path);
SpeakerModel LoadModel(const std::filesystem::path& path);

void SavePretrainModel(PretrainModel& model, const nlohmann::json& config, std::uint64_t seed,
                       std::size_t step, const std::filesystem::path& path);
PretrainModel LoadPretrainModel(const std::filesystem::path& path);

}  // namespace biaudit
