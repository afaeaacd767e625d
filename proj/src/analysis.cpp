// src/analysis.cpp

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

#include "biaudit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "biaudit/embedding_io.hpp"
#include "biaudit/error.hpp"
#include "biaudit/rng.hpp"

namespace biaudit {

using Matrix = std::vector<std::vector<double>>;

SymmetricEigen JacobiEigen(const Matrix& matrix) {
  const std::size_t n = matrix.size();
  Matrix a = matrix;
  Matrix v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i].size() != n) throw ConfigError("eigensolver needs a square matrix");
    v[i][i] = 1.0;
  }
  double scale = 0.0;
  for (const auto& row : a)
    for (double x : row) scale += x * x;
  scale = std::sqrt(scale);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (std::sqrt(off) <= 1e-15 * scale || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  SymmetricEigen out;
  for (std::size_t i : order) {
    out.values.push_back(a[i][i]);
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v[k][i];
    out.vectors.push_back(std::move(col));
  }
  return out;
}

Matrix Covariance(const EmbeddingSet& set, std::vector<double>* mean_out) {
  const std::size_t n = set.size(), d = set.dimension;
  if (n < 2) throw DataError("covariance needs at least two records");
  std::vector<double> mean(d, 0.0);
  for (const auto& r : set.records) {
    if (r.vector.size() != d) throw DataError("record dimension mismatch in " + r.utterance_id);
    for (std::size_t j = 0; j < d; ++j) mean[j] += r.vector[j];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  Matrix c(d, std::vector<double>(d, 0.0));
  std::vector<double> x(d);
  for (const auto& r : set.records) {
    for (std::size_t j = 0; j < d; ++j) x[j] = r.vector[j] - mean[j];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) c[i][j] += x[i] * x[j];
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      c[i][j] /= static_cast<double>(n - 1);
      c[j][i] = c[i][j];
    }
  if (mean_out) *mean_out = std::move(mean);
  return c;
}

namespace {

double Dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> Apply(const Matrix& c, const std::vector<double>& x) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) y[i] = Dot(c[i], x);
  return y;
}

// Modified Gram-Schmidt with one re-orthogonalization pass. A column that
// collapses relative to its input norm is replaced by the first basis vector
// with a usable orthogonal residual.
void Orthonormalize(Matrix& q) {
  const std::size_t d = q.empty() ? 0 : q[0].size();
  auto strip = [&](std::size_t i) {
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t j = 0; j < i; ++j) {
        const double r = Dot(q[j], q[i]);
        for (std::size_t k = 0; k < d; ++k) q[i][k] -= r * q[j][k];
      }
    return std::sqrt(Dot(q[i], q[i]));
  };
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double before = std::sqrt(Dot(q[i], q[i]));
    double nrm = strip(i);
    if (!(nrm > 1e-10 * before) || before == 0.0) {
      nrm = 0.0;
      for (std::size_t e = 0; e < d && nrm < 1e-6; ++e) {
        std::fill(q[i].begin(), q[i].end(), 0.0);
        q[i][e] = 1.0;
        nrm = strip(i);
      }
    }
    for (auto& x : q[i]) x /= nrm;
  }
}

// Distance of the new basis from the span of the old one.
double SubspaceChange(const Matrix& old_q, const Matrix& new_q) {
  double total = 0.0;
  for (const auto& v : new_q) {
    std::vector<double> r = v;
    for (const auto& u : old_q) {
      const double c = Dot(u, v);
      for (std::size_t k = 0; k < r.size(); ++k) r[k] -= c * u[k];
    }
    total += Dot(r, r);
  }
  return std::sqrt(total);
}

void FixSign(std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (v[best] < 0.0)
    for (auto& x : v) x = -x;
}

}  // namespace

PcaModel PcaFit(const EmbeddingSet& set, std::size_t k, const PcaOptions& opts) {
  const std::size_t d = set.dimension;
  if (k < 1) throw ConfigError("PCA needs at least one component");
  if (k > d) throw ConfigError("PCA component count exceeds the embedding dimension");
  if (set.size() <= k) throw DataError("PCA needs more records than components");

  PcaModel model;
  const Matrix c = Covariance(set, &model.mean);

  // Orthogonal iteration on a k-column block, deflating each column against
  // the ones before it through Gram-Schmidt.
  Rng rng(DeriveSeed(0x9ca, "pca-init"));
  Matrix q(k, std::vector<double>(d));
  for (auto& col : q)
    for (auto& x : col) x = rng.Normal();
  Orthonormalize(q);
  bool converged = false;
  for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
    Matrix next(k);
    for (std::size_t i = 0; i < k; ++i) next[i] = Apply(c, q[i]);
    Orthonormalize(next);
    const double change = SubspaceChange(q, next);
    q = std::move(next);
    model.iterations = it;
    if (change <= opts.tolerance) {
      converged = true;
      break;
    }
  }

  if (converged) {
    // Rayleigh-Ritz on the converged subspace resolves rotations inside it.
    Matrix h(k, std::vector<double>(k));
    for (std::size_t i = 0; i < k; ++i) {
      const auto ci = Apply(c, q[i]);
      for (std::size_t j = 0; j < k; ++j) h[j][i] = Dot(q[j], ci);
    }
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) h[i][j] = h[j][i] = 0.5 * (h[i][j] + h[j][i]);
    const auto small = JacobiEigen(h);
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<double> v(d, 0.0);
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t t = 0; t < d; ++t) v[t] += small.vectors[i][j] * q[j][t];
      model.components.push_back(std::move(v));
      model.eigenvalues.push_back(small.values[i]);
    }
  } else {
    // Slow separation between the k-th and (k+1)-th eigenvalues.
    model.used_fallback = true;
    const auto full = JacobiEigen(c);
    for (std::size_t i = 0; i < k; ++i) {
      model.components.push_back(full.vectors[i]);
      model.eigenvalues.push_back(full.values[i]);
    }
  }
  for (auto& v : model.components) FixSign(v);
  for (auto& e : model.eigenvalues) e = std::max(e, 0.0);
  return model;
}

std::vector<ProjectedPoint> PcaProject(const PcaModel& model, const EmbeddingSet& set) {
  std::vector<ProjectedPoint> out;
  if (set.records.empty()) return out;
  if (set.dimension != model.mean.size())
    throw DataError("PCA projection dimension mismatch: model " +
                    std::to_string(model.mean.size()) + ", set " +
                    std::to_string(set.dimension));
  std::vector<double> x(model.mean.size());
  for (const auto& r : set.records) {
    if (r.vector.size() != x.size()) throw DataError("record dimension mismatch in " + r.utterance_id);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = r.vector[j] - model.mean[j];
    ProjectedPoint p{r.utterance_id, r.group, {}};
    for (const auto& comp : model.components) p.coords.push_back(Dot(comp, x));
    out.push_back(std::move(p));
  }
  return out;
}

void WritePcaCsv(const std::vector<ProjectedPoint>& points, std::ostream& out) {
  out << "utt,group,pc1,pc2\n";
  for (const auto& p : points) {
    if (p.coords.size() < 2) throw ConfigError("PCA CSV needs two components");
    out << p.utterance_id << ',' << GroupCode(p.group) << ',' << FormatReal(p.coords[0]) << ','
        << FormatReal(p.coords[1]) << '\n';
  }
}

// ---- report ----------------------------------------------------------------

namespace {

struct Emitter {
  std::filesystem::path dir;
  std::vector<std::string> files;
  nlohmann::json digests = nlohmann::json::object();

  void Write(const std::string& name, const std::string& text) {
    WriteFileBytes(dir / name, text);
    files.push_back(name);
    digests[name] = HexDigest(Fnv1a64(text));
  }
};

}  // namespace

ReportBundle BuildReport(const ReportInputs& in, const std::filesystem::path& out_dir) {
  for (const auto& m : in.models)
    if (m.run_hash != in.run_hash)
      throw EvaluationError("inconsistent run: model " + m.name + " carries hash " + m.run_hash);
  if (in.threats_run_hash != in.run_hash)
    throw EvaluationError("inconsistent run: threat report carries hash " + in.threats_run_hash);
  if (in.models.empty()) throw EvaluationError("report needs at least one model");

  std::filesystem::create_directories(out_dir);
  Emitter emit{out_dir, {}, {}};

  {
    std::ostringstream os;
    os << "group";
    for (const auto& m : in.models) os << ',' << m.name;
    os << '\n';
    const char* rows[] = {"Overall", "Male", "Female"};
    for (int r = 0; r < 3; ++r) {
      os << rows[r];
      for (const auto& m : in.models)
        os << ',' << FormatReal(r == 0 ? m.eer_overall : r == 1 ? m.eer_male : m.eer_female);
      os << '\n';
    }
    emit.Write("table1_utility.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "alpha,far_low,far_high";
    for (const auto& m : in.models) os << ',' << m.name;
    os << '\n';
    for (const auto& [alpha, _] : in.models.front().aufdr) {
      os << FormatReal(alpha) << ',' << FormatReal(in.fdr.far_low) << ','
         << FormatReal(in.fdr.far_high);
      for (const auto& m : in.models) {
        const auto it = m.aufdr.find(alpha);
        if (it == m.aufdr.end()) throw EvaluationError("auFDR alpha grids differ across models");
        os << ',' << FormatReal(it->second);
      }
      os << '\n';
    }
    emit.Write("table1_aufdr.csv", os.str());
  }
  {
    std::ostringstream os;
    WriteThreatReport(in.threats, os);
    emit.Write("table2_threats.csv", os.str());
  }
  for (const auto& m : in.models) {
    std::ostringstream os;
    WriteFdrCurve(m.fdr_curve, os);
    emit.Write("fig2_fdr_" + m.name + ".csv", os.str());
  }
  for (const auto& m : in.models) {
    std::ostringstream os;
    WritePcaCsv(m.pca, os);
    emit.Write("fig3_pca_" + m.name + ".csv", os.str());
  }
  {
    std::ostringstream os;
    os << "model,layer,lambda_male,lambda_female,fad,nfad\n";
    for (const auto& m : in.models)
      for (const auto& r : m.fad)
        os << m.name << ',' << r.layer << ',' << FormatReal(r.lambda_male) << ','
           << FormatReal(r.lambda_female) << ',' << FormatReal(r.fad) << ','
           << FormatReal(r.nfad) << '\n';
    emit.Write("fig4_fad.csv", os.str());
  }

  nlohmann::json manifest;
  manifest["format"] = "biaudit-report";
  manifest["version"] = 1;
  manifest["run_hash"] = in.run_hash;
  manifest["far_range"] = {{"low", in.fdr.far_low},
                           {"high", in.fdr.far_high},
                           {"closed", "(low, high]"},
                           {"grid_points", in.fdr.grid_points}};
  if (in.fdr.epsilon) manifest["far_range"]["epsilon"] = *in.fdr.epsilon;
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : in.models) {
    nlohmann::json j;
    j["name"] = m.name;
    j["config_hash"] = m.config_hash;
    j["eer"] = {{"overall", m.eer_overall}, {"male", m.eer_male}, {"female", m.eer_female}};
    j["speaker_train_accuracy"] = m.speaker_train_accuracy;
    j["gender_head_accuracy"] = m.gender_head_accuracy;
    nlohmann::json au = nlohmann::json::array();
    for (const auto& [alpha, v] : m.aufdr) au.push_back({{"alpha", alpha}, {"aufdr", v}});
    j["aufdr"] = au;
    models.push_back(j);
  }
  manifest["models"] = models;
  nlohmann::json threats = nlohmann::json::array();
  for (const auto& r : in.threats.rows)
    threats.push_back({{"threat_model", ThreatName(r.kind)},
                       {"train_source", r.train_source},
                       {"test_source", r.test_source},
                       {"auc", r.auc}});
  manifest["threats"] = threats;
  const auto& ac = in.threats.config;
  manifest["attacker"] = {{"hidden_units", ac.hidden_units}, {"epochs", ac.epochs},
                          {"batch_size", ac.batch_size},     {"learning_rate", ac.learning_rate},
                          {"momentum", ac.momentum},         {"validation_fraction", ac.validation_fraction},
                          {"seed", ac.seed}};
  manifest["extra"] = in.extra;
  manifest["files"] = emit.files;
  manifest["file_digests"] = emit.digests;

  const std::string text = manifest.dump(2) + "\n";
  WriteFileBytes(out_dir / "manifest.json", text);
  ReportBundle bundle{out_dir, emit.files, manifest};
  bundle.files.push_back("manifest.json");
  return bundle;
}

}  // namespace biaudit
