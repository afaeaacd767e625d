// src/embedding_io.cpp

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

#include "biaudit/embedding_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "biaudit/error.hpp"
#include "json.hpp"

namespace biaudit {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace {

using json = nlohmann::json;

void PutU32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void PutF32(std::string& out, float v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  void Seek(std::uint64_t pos) {
    if (pos > bytes_.size())
      throw TruncationError("offset " + std::to_string(pos) + " beyond end of file (" +
                            std::to_string(bytes_.size()) + " bytes)");
    pos_ = pos;
  }
  void Need(std::uint64_t n, const char* what) const {
    if (pos_ + n > bytes_.size())
      throw TruncationError(std::string(what) + " at byte " + std::to_string(pos_) +
                            " needs " + std::to_string(n) + " bytes, " +
                            std::to_string(bytes_.size() - pos_) + " remain");
  }
  std::uint32_t U32(const char* what) {
    Need(4, what);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::uint8_t U8(const char* what) {
    Need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  float F32(const char* what) {
    Need(4, what);
    float v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string Str(std::uint64_t n, const char* what) {
    Need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t pos() const { return pos_; }

 private:
  const std::string& bytes_;
  std::uint64_t pos_ = 0;
};

std::string StringTable(const std::vector<std::string>& strings) {
  std::string out;
  PutU32(out, static_cast<std::uint32_t>(strings.size()));
  for (const auto& s : strings) {
    PutU32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
  }
  return out;
}

std::vector<std::string> ReadStringTable(ByteReader& r) {
  std::uint32_t n = r.U32("string table size");
  std::vector<std::string> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t len = r.U32("string length");
    out.push_back(r.Str(len, "string bytes"));
  }
  return out;
}

constexpr std::uint64_t kHeaderStart = 16 + 4;

}  // namespace

std::string SerializeEmbeddings(const EmbeddingSet& set) {
  std::vector<std::string> speakers;
  std::unordered_map<std::string, std::uint32_t> speaker_index;
  std::vector<std::string> utterances;
  utterances.reserve(set.records.size());
  for (const auto& r : set.records) {
    if (r.vector.size() != set.dimension)
      throw DataError("record '" + r.utterance_id + "' does not match dimension " +
                      std::to_string(set.dimension));
    utterances.push_back(r.utterance_id);
    if (speaker_index.emplace(r.speaker_id, speakers.size()).second)
      speakers.push_back(r.speaker_id);
  }

  std::string payload;
  const std::uint64_t record_size = 4 + 4 + 1 + 4 * set.dimension;
  payload.reserve(record_size * set.records.size());
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    const auto& r = set.records[i];
    PutU32(payload, static_cast<std::uint32_t>(i));
    PutU32(payload, speaker_index.at(r.speaker_id));
    payload.push_back(static_cast<char>(GroupCode(r.group)));
    for (float x : r.vector) PutF32(payload, x);
  }
  const std::string utt_table = StringTable(utterances);
  const std::string spk_table = StringTable(speakers);

  // The header records absolute offsets, which depend on its own length.
  std::string header;
  std::uint64_t header_len = 0;
  for (int iter = 0; iter < 8; ++iter) {
    const std::uint64_t record_offset = kHeaderStart + header_len;
    const std::uint64_t utt_offset = record_offset + payload.size();
    json h;
    h["format"] = "biaudit-embeddings";
    h["version"] = 1;
    h["dimension"] = set.dimension;
    h["count"] = set.records.size();
    h["provenance"] = set.provenance;
    h["field_order"] = {"utterance_index", "speaker_index", "group", "vector"};
    h["record_offset"] = record_offset;
    h["record_size"] = record_size;
    h["utterance_table_offset"] = utt_offset;
    h["speaker_table_offset"] = utt_offset + utt_table.size();
    header = h.dump();
    if (header.size() == header_len) break;
    header_len = header.size();
  }

  std::string out(kEmbeddingMagic, sizeof(kEmbeddingMagic));
  PutU32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  out += payload;
  out += utt_table;
  out += spk_table;
  return out;
}

EmbeddingSet ParseEmbeddings(const std::string& bytes) {
  ByteReader r(bytes);
  if (bytes.size() < sizeof(kEmbeddingMagic))
    throw TruncationError("file shorter than the magic");
  if (std::memcmp(bytes.data(), kEmbeddingMagic, sizeof(kEmbeddingMagic)) != 0)
    throw FormatError("bad magic", 0);
  r.Seek(16);
  const std::uint32_t header_len = r.U32("header length");
  const std::string header_text = r.Str(header_len, "header");

  json h;
  try {
    h = json::parse(header_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("header is not valid JSON (") + e.what() + ")",
                      kHeaderStart + (e.byte > 0 ? e.byte - 1 : 0));
  }
  EmbeddingSet set;
  std::uint64_t count = 0, record_offset = 0, record_size = 0, utt_offset = 0,
                spk_offset = 0;
  try {
    if (h.at("format").get<std::string>() != "biaudit-embeddings")
      throw FormatError("unexpected format tag", kHeaderStart);
    set.dimension = h.at("dimension").get<std::size_t>();
    set.provenance = h.at("provenance").get<std::string>();
    count = h.at("count").get<std::uint64_t>();
    record_offset = h.at("record_offset").get<std::uint64_t>();
    record_size = h.at("record_size").get<std::uint64_t>();
    utt_offset = h.at("utterance_table_offset").get<std::uint64_t>();
    spk_offset = h.at("speaker_table_offset").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("header field: ") + e.what(), kHeaderStart);
  }
  if (record_size != 9 + 4 * set.dimension)
    throw FormatError("record size disagrees with dimension", kHeaderStart);
  if (record_offset != kHeaderStart + header_len)
    throw FormatError("record offset does not follow header", kHeaderStart);

  r.Seek(utt_offset);
  const auto utterances = ReadStringTable(r);
  r.Seek(spk_offset);
  const auto speakers = ReadStringTable(r);

  r.Seek(record_offset);
  set.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t at = r.pos();
    EmbeddingRecord rec;
    std::uint32_t ui = r.U32("record");
    std::uint32_t si = r.U32("record");
    std::uint8_t g = r.U8("record");
    if (ui >= utterances.size() || si >= speakers.size() || g > 1)
      throw FormatError("record " + std::to_string(i) + " has an index out of range", at);
    rec.utterance_id = utterances[ui];
    rec.speaker_id = speakers[si];
    rec.group = static_cast<GroupLabel>(g);
    rec.vector.resize(set.dimension);
    for (auto& x : rec.vector) x = r.F32("record vector");
    set.records.push_back(std::move(rec));
  }
  return set;
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileBytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

void SaveEmbeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  WriteFileBytes(path, SerializeEmbeddings(set));
}

EmbeddingSet LoadEmbeddings(const std::filesystem::path& path) {
  return ParseEmbeddings(ReadFileBytes(path));
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

std::string FormatReal(double value, int digits) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, value);
  return buf;
}

namespace {

void ExpectHeader(std::istream& in, const std::string& expected) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV, expected header '" + expected + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected)
    throw DataError("CSV header '" + line + "' does not match '" + expected + "'");
}

bool ParseBool(const std::string& s, std::size_t line_no) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw DataError("line " + std::to_string(line_no) + ": bad boolean '" + s + "'");
}

GroupLabel ParseGroupOrThrow(const std::string& s, std::size_t line_no) {
  auto g = ParseGroup(s);
  if (!g) throw DataError("line " + std::to_string(line_no) + ": bad group '" + s + "'");
  return *g;
}

double ParseReal(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
}

constexpr const char* kTrialHeader = "enroll_utt,test_utt,is_target,group";
constexpr const char* kScoreHeader = "enroll_utt,test_utt,is_target,group,score";

template <typename Row>
void ForEachRow(std::istream& in, std::size_t n_fields, Row&& row) {
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = SplitCsvLine(line);
    if (f.size() != n_fields)
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(n_fields) + " fields, got " + std::to_string(f.size()));
    row(f, line_no);
  }
}

}  // namespace

void WriteTrials(const TrialList& trials, std::ostream& out) {
  out << kTrialHeader << '\n';
  for (const auto& t : trials)
    out << t.enroll_utt << ',' << t.test_utt << ',' << (t.is_target ? 1 : 0) << ','
        << GroupCode(t.group) << '\n';
}

TrialList ReadTrials(std::istream& in) {
  ExpectHeader(in, kTrialHeader);
  TrialList out;
  ForEachRow(in, 4, [&](const std::vector<std::string>& f, std::size_t ln) {
    out.push_back(Trial{f[0], f[1], ParseBool(f[2], ln), ParseGroupOrThrow(f[3], ln)});
  });
  return out;
}

void WriteScores(const ScoreSet& scores, std::ostream& out) {
  out << kScoreHeader << '\n';
  for (const auto& s : scores)
    out << s.trial.enroll_utt << ',' << s.trial.test_utt << ','
        << (s.trial.is_target ? 1 : 0) << ',' << GroupCode(s.trial.group) << ','
        << FormatReal(s.score, 9) << '\n';
}

ScoreSet ReadScores(std::istream& in) {
  ExpectHeader(in, kScoreHeader);
  ScoreSet out;
  ForEachRow(in, 5, [&](const std::vector<std::string>& f, std::size_t ln) {
    ScoreRecord r;
    r.trial = Trial{f[0], f[1], ParseBool(f[2], ln), ParseGroupOrThrow(f[3], ln)};
    r.score = ParseReal(f[4], ln);
    if (!std::isfinite(r.score))
      throw DataError("line " + std::to_string(ln) + ": non-finite score");
    out.push_back(std::move(r));
  });
  return out;
}

void SaveTrials(const TrialList& trials, const std::filesystem::path& path) {
  std::ostringstream ss;
  WriteTrials(trials, ss);
  WriteFileBytes(path, ss.str());
}

TrialList LoadTrials(const std::filesystem::path& path) {
  std::istringstream ss(ReadFileBytes(path));
  return ReadTrials(ss);
}

void SaveScores(const ScoreSet& scores, const std::filesystem::path& path) {
  std::ostringstream ss;
  WriteScores(scores, ss);
  WriteFileBytes(path, ss.str());
}

ScoreSet LoadScores(const std::filesystem::path& path) {
  std::istringstream ss(ReadFileBytes(path));
  return ReadScores(ss);
}

}  // namespace biaudit
