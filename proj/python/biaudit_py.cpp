// python/biaudit_py.cpp

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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "biaudit/analysis.hpp"
#include "biaudit/fairness.hpp"
#include "biaudit/metrics.hpp"
#include "biaudit/pipeline.hpp"

namespace py = pybind11;
using namespace biaudit;

namespace {

// Scores arrive as parallel lists: score, is_target, group code (0 male, 1 female).
ScoreSet MakeScores(const std::vector<double>& score, const std::vector<bool>& is_target,
                    const std::vector<int>& group) {
  if (score.size() != is_target.size() || score.size() != group.size())
    throw DataError("score, is_target and group must have equal lengths");
  ScoreSet out;
  for (std::size_t i = 0; i < score.size(); ++i) {
    ScoreRecord r;
    r.trial.enroll_utt = "e" + std::to_string(i);
    r.trial.test_utt = "t" + std::to_string(i);
    r.trial.is_target = is_target[i];
    const auto g = ParseGroup(std::to_string(group[i]));
    if (!g) throw DataError("group codes must be 0 or 1");
    r.trial.group = *g;
    r.score = score[i];
    out.push_back(r);
  }
  return out;
}

LayerActivationSet MakeActivations(const std::vector<std::vector<double>>& rows) {
  LayerActivationSet a;
  a.neurons = rows.size();
  a.frames = rows.empty() ? 0 : rows[0].size();
  for (const auto& r : rows) {
    if (r.size() != a.frames) throw DataError("activation rows must have equal lengths");
    a.values.insert(a.values.end(), r.begin(), r.end());
  }
  return a;
}

EmbeddingSet MakeSet(const std::vector<std::vector<double>>& rows) {
  EmbeddingSet s;
  s.dimension = rows.empty() ? 0 : rows[0].size();
  for (std::size_t i = 0; i < rows.size(); ++i)
    s.records.push_back({"u" + std::to_string(i), "s" + std::to_string(i), GroupLabel::kMale,
                         std::vector<float>(rows[i].begin(), rows[i].end())});
  return s;
}

py::list CurveToList(const FdrCurve& curve) {
  py::list out;
  for (const auto& p : curve)
    out.append(py::make_tuple(p.tau, p.far_overall, p.a, p.b, p.fdr));
  return out;
}

}  // namespace

PYBIND11_MODULE(_biaudit, m) {
  m.doc() = "Speaker-verification fairness and privacy audit";
  py::register_exception<Error>(m, "BiauditError", PyExc_ValueError);

  m.def("eer", [](const std::vector<double>& target, const std::vector<double>& nontarget) {
    const auto r = Eer(Roc(target, nontarget));
    return py::make_tuple(r.eer, r.tau);
  }, py::arg("target"), py::arg("nontarget"), "Equal error rate and its threshold.");

  m.def("roc", [](const std::vector<double>& target, const std::vector<double>& nontarget) {
    py::list out;
    for (const auto& p : Roc(target, nontarget)) out.append(py::make_tuple(p.tau, p.far, p.frr));
    return out;
  }, py::arg("target"), py::arg("nontarget"));

  m.def("auc", [](const std::vector<double>& pos, const std::vector<double>& neg) {
    return Auc(pos, neg);
  }, py::arg("positive"), py::arg("negative"));

  m.def("cosine_score", [](const std::vector<double>& a, const std::vector<double>& b) {
    return CosineScore(std::span<const double>(a), std::span<const double>(b));
  });

  m.def("fdr_curve",
        [](const std::vector<double>& score, const std::vector<bool>& is_target,
           const std::vector<int>& group, double alpha, double far_low, double far_high,
           std::size_t grid_points) {
          const ScoreSet s = MakeScores(score, is_target, group);
          FdrConfig cfg;
          cfg.alpha = alpha;
          cfg.far_low = far_low;
          cfg.far_high = far_high;
          cfg.grid_points = grid_points;
          return CurveToList(ComputeFdrCurve(ScoresByGroup(s), cfg, s));
        },
        py::arg("score"), py::arg("is_target"), py::arg("group"), py::arg("alpha") = 0.5,
        py::arg("far_low") = 0.001, py::arg("far_high") = 0.1, py::arg("grid_points") = 200,
        "Rows of (tau, far_overall, A, B, fdr).");

  m.def("aufdr", [](const std::vector<std::tuple<double, double, double, double, double>>& rows) {
    FdrCurve c;
    for (const auto& [tau, far, a, b, fdr] : rows) c.push_back({tau, far, a, b, fdr});
    return AuFdr(c);
  }, py::arg("curve"));

  m.def("fdr", &Fdr, py::arg("a"), py::arg("b"), py::arg("alpha"));

  m.def("lambda_activation", [](const std::vector<std::vector<double>>& act) {
    return LambdaActivation(MakeActivations(act));
  }, py::arg("activations"), "Activations as neurons x frames.");
  m.def("fad", &Fad);
  m.def("normalized_fad", &NormalizedFad);

  m.def("pca_fit", [](const std::vector<std::vector<double>>& rows, std::size_t k) {
    const PcaModel p = PcaFit(MakeSet(rows), k);
    py::dict d;
    d["mean"] = p.mean;
    d["components"] = p.components;
    d["eigenvalues"] = p.eigenvalues;
    return d;
  }, py::arg("rows"), py::arg("k"));

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("master_seed", &RunConfig::master_seed)
      .def_readwrite("eval_speakers", &RunConfig::eval_speakers)
      .def_readwrite("eval_utts_per_speaker", &RunConfig::eval_utts_per_speaker)
      .def_readwrite("attack_speakers", &RunConfig::attack_speakers)
      .def_readwrite("n_target_trials", &RunConfig::n_target_trials)
      .def_readwrite("n_nontarget_trials", &RunConfig::n_nontarget_trials)
      .def_readwrite("output_dir", &RunConfig::output_dir)
      .def_property("n_speakers", [](const RunConfig& c) { return c.corpus.n_speakers; },
                    [](RunConfig& c, std::size_t v) { c.corpus.n_speakers = v; })
      .def_property("utts_per_speaker", [](const RunConfig& c) { return c.corpus.utts_per_speaker; },
                    [](RunConfig& c, std::size_t v) { c.corpus.utts_per_speaker = v; })
      .def_property("gender_offset", [](const RunConfig& c) { return c.corpus.gender_offset; },
                    [](RunConfig& c, double v) { c.corpus.gender_offset = v; })
      .def_property("total_steps", [](const RunConfig& c) { return c.finetune.total_steps; },
                    [](RunConfig& c, std::size_t v) { c.finetune.total_steps = v; })
      .def_property("warmup_steps", [](const RunConfig& c) { return c.finetune.warmup_steps; },
                    [](RunConfig& c, std::size_t v) { c.finetune.warmup_steps = v; })
      .def_property("attacker_epochs", [](const RunConfig& c) { return c.attacker.epochs; },
                    [](RunConfig& c, std::size_t v) { c.attacker.epochs = v; })
      .def("to_json", [](const RunConfig& c) { return c.ToJson().dump(); })
      .def("hash", &RunConfig::Hash);

  m.def("run_pipeline", [](const RunConfig& cfg) {
    PipelineResult r;
    {
      py::gil_scoped_release release;
      r = RunPipeline(cfg);
    }
    return r.bundle.manifest.dump();
  }, py::arg("config"), "Runs every stage; returns the manifest as JSON text.");
}
