// tests/unit/report_schema.hpp

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

// Schema checks for a report bundle directory. Each check appends a
// human-readable problem; an empty list means the bundle is well formed.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "biaudit/embedding_io.hpp"
#include "biaudit/rng.hpp"
#include "json.hpp"

namespace biaudit::testing {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline bool ReadCsv(const std::filesystem::path& path, CsvTable* table) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line)) return false;
  table->header = SplitCsvLine(line);
  while (std::getline(in, line))
    if (!line.empty()) table->rows.push_back(SplitCsvLine(line));
  return true;
}

inline bool ParseNumber(const std::string& s, double* v) {
  try {
    std::size_t used = 0;
    *v = std::stod(s, &used);
    return used == s.size() && std::isfinite(*v);
  } catch (...) {
    return false;
  }
}

class BundleChecker {
 public:
  explicit BundleChecker(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::vector<std::string> Run() {
    CheckManifest();
    if (!problems_.empty()) return problems_;
    CheckUtility();
    CheckAufdr();
    CheckThreats();
    for (const auto& m : models_) {
      CheckFdr("fig2_fdr_" + m + ".csv");
      CheckPca("fig3_pca_" + m + ".csv");
    }
    CheckFad();
    return problems_;
  }

  const nlohmann::json& manifest() const { return manifest_; }

 private:
  void Problem(const std::string& what) { problems_.push_back(what); }

  CsvTable Load(const std::string& name, const std::vector<std::string>& header) {
    CsvTable t;
    if (!ReadCsv(dir_ / name, &t)) {
      Problem(name + ": unreadable");
      return t;
    }
    if (t.header != header) Problem(name + ": unexpected header");
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      if (t.rows[i].size() != t.header.size())
        Problem(name + ": row " + std::to_string(i + 1) + " has the wrong column count");
    return t;
  }

  double Cell(const std::string& name, const std::string& s, double lo, double hi) {
    double v = 0;
    if (!ParseNumber(s, &v)) {
      Problem(name + ": not a number '" + s + "'");
    } else if (v < lo || v > hi) {
      Problem(name + ": value " + s + " outside [" + std::to_string(lo) + ", " +
              std::to_string(hi) + "]");
    }
    return v;
  }

  void CheckManifest() {
    std::ifstream in(dir_ / "manifest.json");
    if (!in) return Problem("manifest.json missing");
    try {
      manifest_ = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
      return Problem(std::string("manifest.json: ") + e.what());
    }
    if (manifest_.value("format", "") != "biaudit-report") Problem("manifest: bad format tag");
    const auto& fr = manifest_["far_range"];
    if (!fr.is_object() || fr.value("low", -1.0) != 0.001 || fr.value("high", -1.0) != 0.1 ||
        fr.value("closed", "") != "(low, high]")
      Problem("manifest: FAR range annotation missing or not (0.001, 0.1]");
    if (!manifest_["run_hash"].is_string()) Problem("manifest: no run hash");
    for (const auto& m : manifest_["models"]) {
      models_.push_back(m.value("name", ""));
      if (!m.contains("config_hash")) Problem("manifest: model without config hash");
    }
    if (models_.empty()) Problem("manifest: no models");

    std::set<std::string> listed;
    for (const auto& f : manifest_["files"]) {
      const std::string name = f.get<std::string>();
      listed.insert(name);
      if (!std::filesystem::exists(dir_ / name)) {
        Problem("manifest lists missing file " + name);
        continue;
      }
      const auto digest = manifest_["file_digests"].value(name, "");
      if (digest != HexDigest(Fnv1a64(ReadFileBytes(dir_ / name))))
        Problem("digest mismatch for " + name);
    }
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      const auto name = e.path().filename().string();
      if (name != "manifest.json" && !listed.count(name))
        Problem("file not referenced by the manifest: " + name);
    }
  }

  std::vector<std::string> ModelHeader(std::vector<std::string> lead) {
    lead.insert(lead.end(), models_.begin(), models_.end());
    return lead;
  }

  void CheckUtility() {
    const std::string name = "table1_utility.csv";
    const CsvTable t = Load(name, ModelHeader({"group"}));
    const char* groups[] = {"Overall", "Male", "Female"};
    if (t.rows.size() != 3) return Problem(name + ": expected three rows");
    for (int r = 0; r < 3; ++r) {
      if (t.rows[r].empty() || t.rows[r][0] != groups[r]) Problem(name + ": bad row label");
      for (std::size_t c = 1; c < t.rows[r].size(); ++c) Cell(name, t.rows[r][c], 0, 1);
    }
  }

  void CheckAufdr() {
    const std::string name = "table1_aufdr.csv";
    const CsvTable t = Load(name, ModelHeader({"alpha", "far_low", "far_high"}));
    if (t.rows.empty()) Problem(name + ": no rows");
    for (const auto& row : t.rows)
      for (std::size_t c = 0; c < row.size(); ++c) Cell(name, row[c], 0, 1);
  }

  void CheckThreats() {
    const std::string name = "table2_threats.csv";
    const CsvTable t = Load(name, {"threat_model", "train_source", "test_source", "auc"});
    if (t.rows.size() != 5) return Problem(name + ": expected five rows");
    for (std::size_t i = 0; i < 5; ++i) {
      if (t.rows[i].size() != 4) continue;
      if (t.rows[i][0] != (i < 4 ? "uIA" : "IA")) Problem(name + ": bad threat model");
      Cell(name, t.rows[i][3], 0, 1);
    }
  }

  void CheckFdr(const std::string& name) {
    const CsvTable t = Load(name, {"tau", "far_overall", "A", "B", "fdr"});
    if (t.rows.size() < 100) Problem(name + ": fewer than 100 curve points");
    for (const auto& row : t.rows) {
      if (row.size() != 5) continue;
      double tau;
      if (!ParseNumber(row[0], &tau)) Problem(name + ": bad threshold");
      const double far = Cell(name, row[1], 0, 1);
      if (!(far > 0.001 && far <= 0.1)) Problem(name + ": FAR outside (0.001, 0.1]");
      for (int c = 2; c < 5; ++c) Cell(name, row[c], 0, 1);
    }
  }

  void CheckPca(const std::string& name) {
    const CsvTable t = Load(name, {"utt", "group", "pc1", "pc2"});
    if (t.rows.empty()) Problem(name + ": no points");
    for (const auto& row : t.rows) {
      if (row.size() != 4) continue;
      if (row[1] != "0" && row[1] != "1") Problem(name + ": bad group code");
      double v;
      if (!ParseNumber(row[2], &v) || !ParseNumber(row[3], &v)) Problem(name + ": bad coordinate");
    }
  }

  void CheckFad() {
    const std::string name = "fig4_fad.csv";
    const CsvTable t =
        Load(name, {"model", "layer", "lambda_male", "lambda_female", "fad", "nfad"});
    if (t.rows.empty()) Problem(name + ": no rows");
    for (const auto& row : t.rows) {
      if (row.size() != 6) continue;
      const double lm = Cell(name, row[2], 0, 1e300), lf = Cell(name, row[3], 0, 1e300);
      const double fad = Cell(name, row[4], 0, 1e300);
      Cell(name, row[5], 0, 1);
      if (std::abs(fad - std::abs(lm - lf)) > 1e-7 * std::max({1.0, lm, lf}))
        Problem(name + ": fad is not |lambda_male - lambda_female|");
    }
  }

  std::filesystem::path dir_;
  nlohmann::json manifest_;
  std::vector<std::string> models_;
  std::vector<std::string> problems_;
};

}  // namespace biaudit::testing
