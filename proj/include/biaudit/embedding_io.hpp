// include/biaudit/embedding_io.hpp

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
#include <string>
#include <vector>

#include "biaudit/datamodel.hpp"

namespace biaudit {

/// Embedding container layout (all integers little-endian):
///
///   16 bytes   magic "BIAUDIT-EMB" padded with NULs
///   u32        header length H
///   H bytes    UTF-8 JSON header: dimension, count, provenance, field_order,
///              record_offset, record_size, utterance_table_offset,
///              speaker_table_offset
///   count x    { u32 utterance index, u32 speaker index, u8 group, d x f32 }
///   tables     u32 n, then n x { u32 byte length, bytes } for utterances,
///              then the same for speakers
inline constexpr char kEmbeddingMagic[16] = {'B', 'I', 'A', 'U', 'D', 'I', 'T', '-',
                                             'E', 'M', 'B', 0,   0,   0,   0,   0};

std::string SerializeEmbeddings(const EmbeddingSet& set);
EmbeddingSet ParseEmbeddings(const std::string& bytes);

void SaveEmbeddings(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet LoadEmbeddings(const std::filesystem::path& path);

// CSV formats. Booleans are written as 1/0 and groups by integer code.

void WriteTrials(const TrialList& trials, std::ostream& out);
TrialList ReadTrials(std::istream& in);
void SaveTrials(const TrialList& trials, const std::filesystem::path& path);
TrialList LoadTrials(const std::filesystem::path& path);

/// Scores are printed with 9 significant digits.
void WriteScores(const ScoreSet& scores, std::ostream& out);
ScoreSet ReadScores(std::istream& in);
void SaveScores(const ScoreSet& scores, const std::filesystem::path& path);
ScoreSet LoadScores(const std::filesystem::path& path);

// Helpers shared by the other file writers.
std::string ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, const std::string& bytes);
std::vector<std::string> SplitCsvLine(const std::string& line);
std::string FormatReal(double value, int significant_digits = 9);

}  // namespace biaudit
