// tests/unit/test_fairness.cpp

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

#include <cmath>
#include <sstream>

#include "biaudit/error.hpp"
#include "biaudit/fairness.hpp"
#include "biaudit/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace biaudit;
using namespace biaudit::testing;

namespace {

void AddScores(ScoreSet& s, GroupLabel g, const std::vector<double>& target,
               const std::vector<double>& nontarget) {
  for (double v : target) s.push_back({{"e", "t", true, g}, v});
  for (double v : nontarget) s.push_back({{"e", "t", false, g}, v});
}

std::vector<double> Normals(Rng& rng, std::size_t n, double mean, double sd = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = mean + sd * rng.Normal();
  return v;
}

struct Split {
  std::vector<double> target, nontarget;
};

Split Classes(const ScoreSet& s) {
  Split out;
  for (const auto& r : s) (r.trial.is_target ? out.target : out.nontarget).push_back(r.score);
  return out;
}

// Two groups with different score distributions and both classes.
ScoreSet TwoGroups(Rng& rng, std::size_t n_target, std::size_t n_nontarget) {
  ScoreSet s;
  AddScores(s, GroupLabel::kMale, Normals(rng, n_target, 2.0), Normals(rng, n_nontarget, 0.0));
  AddScores(s, GroupLabel::kFemale, Normals(rng, n_target, 1.6, 1.2),
            Normals(rng, n_nontarget, 0.2, 0.9));
  return s;
}

FdrCurve Synthetic(const std::vector<double>& fars, const std::vector<double>& fdrs) {
  FdrCurve c;
  for (std::size_t i = 0; i < fars.size(); ++i) c.push_back({0.0, fars[i], 0.0, 0.0, fdrs[i]});
  return c;
}

}  // namespace

TEST_CASE("fdr formula") {
  CHECK(Fdr(0.1, 0.2, 0.5) == 0.85);
  CHECK(Fdr(0.0, 0.0, 0.3) == 1.0);
  CHECK(Fdr(1.0, 1.0, 0.7) == doctest::Approx(0.0));
}

TEST_CASE("group gaps") {
  ScoreSet same;
  const std::vector<double> tg = {0.9, 0.7, 0.5}, nt = {0.1, 0.6, 0.3, 0.2};
  AddScores(same, GroupLabel::kMale, tg, nt);
  AddScores(same, GroupLabel::kFemale, tg, nt);
  for (double tau : {-1.0, 0.15, 0.4, 0.65, 2.0}) {
    const auto g = AbAtThreshold(ScoresByGroup(same), tau);
    CHECK(g.a == 0.0);
    CHECK(g.b == 0.0);
  }

  // At tau = 0.5: male FAR 3/10, female FAR 1/10, FRR 0 for both.
  ScoreSet built;
  AddScores(built, GroupLabel::kMale, {0.9, 0.8},
            {0.6, 0.7, 0.55, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
  AddScores(built, GroupLabel::kFemale, {0.95, 0.85},
            {0.6, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
  const auto g = AbAtThreshold(ScoresByGroup(built), 0.5);
  CHECK(g.a == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(g.b == 0.0);

  Rng rng(1);
  const ScoreSet s = TwoGroups(rng, 50, 150);
  const auto by = ScoresByGroup(s);
  const Split m = Classes(by.at(GroupLabel::kMale)), f = Classes(by.at(GroupLabel::kFemale));
  for (int k = 0; k < 30; ++k) {
    const double tau = -2.0 + 0.15 * k;
    const auto rm = CountRates(m.target, m.nontarget, tau), rf = CountRates(f.target, f.nontarget, tau);
    const auto gap = AbAtThreshold(by, tau);
    CHECK(gap.a == std::abs(rm.far - rf.far));
    CHECK(gap.b == std::abs(rm.frr - rf.frr));
  }

  ScoreSet one_group;
  AddScores(one_group, GroupLabel::kMale, tg, nt);
  CHECK_THROWS_AS(AbAtThreshold(ScoresByGroup(one_group), 0.5), EvaluationError);
  ScoreSet missing = one_group;
  AddScores(missing, GroupLabel::kFemale, {}, nt);
  CHECK_THROWS_WITH_AS(AbAtThreshold(ScoresByGroup(missing), 0.5), doctest::Contains("female"),
                       EvaluationError);
}

TEST_CASE("fdr curve") {
  Rng rng(2);
  const ScoreSet s = TwoGroups(rng, 1500, 3000);
  const auto by = ScoresByGroup(s);
  for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    FdrConfig cfg;
    cfg.alpha = alpha;
    const FdrCurve c = ComputeFdrCurve(by, cfg, s);
    CHECK(c.size() >= 100);
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto& p = c[i];
      if (i) CHECK(p.tau > c[i - 1].tau);
      CHECK(p.far_overall > cfg.far_low);
      CHECK(p.far_overall <= cfg.far_high);
      CHECK(std::abs(p.fdr - (1.0 - (alpha * p.a + (1 - alpha) * p.b))) <= 1e-12);
      CHECK(p.fdr >= 0.0);
      CHECK(p.fdr <= 1.0);
      const auto gap = AbAtThreshold(by, p.tau);
      CHECK(gap.a == p.a);
      CHECK(gap.b == p.b);
    }
    const double area = AuFdr(c);
    double lo = 1, hi = 0;
    for (const auto& p : c) {
      lo = std::min(lo, p.fdr);
      hi = std::max(hi, p.fdr);
    }
    CHECK(area >= lo - 1e-12);
    CHECK(area <= hi + 1e-12);
  }

  // Identical groups: perfectly fair everywhere.
  ScoreSet twin;
  const auto tg = Normals(rng, 500, 2.0), nt = Normals(rng, 2000, 0.0);
  AddScores(twin, GroupLabel::kMale, tg, nt);
  AddScores(twin, GroupLabel::kFemale, tg, nt);
  const FdrCurve tc = ComputeFdrCurve(ScoresByGroup(twin), FdrConfig{}, twin);
  for (const auto& p : tc) CHECK(p.fdr == 1.0);
  CHECK(std::abs(AuFdr(tc) - 1.0) <= 1e-9);

  // A FAR range no threshold can reach.
  ScoreSet tiny;
  AddScores(tiny, GroupLabel::kMale, {1.0}, {0.0, 0.1});
  AddScores(tiny, GroupLabel::kFemale, {1.0}, {0.0, 0.1});
  CHECK_THROWS_WITH_AS(ComputeFdrCurve(ScoresByGroup(tiny), FdrConfig{}, tiny),
                       "empty FAR range", EvaluationError);

  FdrConfig bad;
  bad.far_low = 0.2;
  bad.far_high = 0.1;
  CHECK_THROWS(ComputeFdrCurve(by, bad, s));
}

TEST_CASE("alpha extremes isolate one error type") {
  Rng rng(3);
  const ScoreSet s = TwoGroups(rng, 300, 600);
  ScoreSet target_moved = s, nontarget_moved = s;
  for (auto& r : target_moved)
    if (r.trial.is_target && r.group() == GroupLabel::kFemale) r.score -= 0.4;
  for (auto& r : nontarget_moved)
    if (!r.trial.is_target && r.group() == GroupLabel::kFemale) r.score += 0.4;
  const auto base = ScoresByGroup(s), tm = ScoresByGroup(target_moved),
             nm = ScoresByGroup(nontarget_moved);
  bool frr_changed = false, far_changed = false;
  for (int k = 0; k < 40; ++k) {
    const double tau = -1.0 + 0.1 * k;
    const auto g0 = AbAtThreshold(base, tau), gt = AbAtThreshold(tm, tau),
               gn = AbAtThreshold(nm, tau);
    CHECK(Fdr(gt.a, gt.b, 1.0) == Fdr(g0.a, g0.b, 1.0));
    CHECK(Fdr(gn.a, gn.b, 0.0) == Fdr(g0.a, g0.b, 0.0));
    frr_changed |= gt.b != g0.b;
    far_changed |= gn.a != g0.a;
  }
  CHECK(frr_changed);
  CHECK(far_changed);
}

TEST_CASE("aufdr integration") {
  std::vector<double> fars;
  Rng rng(4);
  for (int i = 0; i < 150; ++i) fars.push_back(0.001 + 0.099 * i / 149.0);
  for (double c : {1.0, 0.9, 0.37}) {
    CHECK(std::abs(AuFdr(Synthetic(fars, std::vector<double>(fars.size(), c))) - c) <= 1e-9);
  }
  // Order of points does not matter (curves run by increasing threshold).
  std::vector<double> rev(fars.rbegin(), fars.rend());
  CHECK(std::abs(AuFdr(Synthetic(rev, std::vector<double>(rev.size(), 0.9))) - 0.9) <= 1e-9);

  // Piecewise-linear curve on an uneven grid against a fine midpoint sum.
  std::vector<double> xs = {0.001}, ys;
  while (xs.back() < 0.1) xs.push_back(std::min(0.1, xs.back() + rng.Uniform(0.0005, 0.004)));
  for (std::size_t i = 0; i < xs.size(); ++i) ys.push_back(rng.Uniform(0.6, 1.0));
  const std::size_t n = 1000000;
  const double lo = xs.front(), hi = xs.back(), h = (hi - lo) / n;
  double riemann = 0.0;
  std::size_t seg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = lo + (k + 0.5) * h;
    while (seg + 2 < xs.size() && x > xs[seg + 1]) ++seg;
    const double t = (x - xs[seg]) / (xs[seg + 1] - xs[seg]);
    riemann += (1 - t) * ys[seg] + t * ys[seg + 1];
  }
  riemann /= n;
  CHECK(std::abs(AuFdr(Synthetic(xs, ys)) - riemann) <= 1e-6);

  CHECK_THROWS_AS(AuFdr(Synthetic({0.01}, {1.0})), EvaluationError);
  CHECK_THROWS_AS(AuFdr(Synthetic({0.01, 0.01}, {1.0, 1.0})), EvaluationError);
}

TEST_CASE("activation discrepancy") {
  LayerActivationSet act;
  act.neurons = 3;
  act.frames = 4;
  act.values.assign(12, -2.5);
  CHECK(LambdaActivation(act) == doctest::Approx(2.5).epsilon(1e-15));

  LayerActivationSet single;
  single.neurons = 1;
  single.frames = 2;
  single.values = {3, 4};
  CHECK(LambdaActivation(single) == doctest::Approx(3.5355339).epsilon(1e-8));

  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    LayerActivationSet r;
    r.neurons = 8;
    r.frames = 16;
    for (int i = 0; i < 128; ++i) r.values.push_back(rng.Normal());
    double oracle = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      double ss = 0.0;
      for (std::size_t j = 0; j < 16; ++j) ss += r.values[i * 16 + j] * r.values[i * 16 + j];
      oracle = std::max(oracle, std::sqrt(ss / 16.0));
    }
    CHECK(std::abs(LambdaActivation(r) - oracle) <= 1e-12);
  }
  CHECK_THROWS_AS(LambdaActivation(LayerActivationSet{}), EvaluationError);

  CHECK(Fad(1.7, 1.7) == 0.0);
  CHECK(NormalizedFad(1.7, 1.7) == 0.0);
  CHECK(NormalizedFad(0.0, 0.0) == 0.0);
  CHECK(Fad(2, 1) == 1.0);
  CHECK(NormalizedFad(2, 1) == 0.5);
  CHECK_THROWS_WITH_AS(Fad(-1, 1), "FAD inputs must be non-negative", EvaluationError);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.Uniform(0, 5), b = rng.Uniform(0, 5), c = rng.Uniform(0, 5);
    const double n = NormalizedFad(a, b);
    CHECK(n >= 0.0);
    CHECK(n <= 1.0);
    CHECK(Fad(a, b) == Fad(b, a));
    CHECK(Fad(a, c) <= Fad(a, b) + Fad(b, c) + 1e-15);
  }

  // Identical groups give zero discrepancy at every layer.
  std::vector<LayerActivationSet> male, female;
  for (int l = 0; l < 3; ++l) {
    LayerActivationSet x;
    x.layer_index = l;
    x.neurons = 4;
    x.frames = 5;
    for (int i = 0; i < 20; ++i) x.values.push_back(rng.Normal());
    male.push_back(x);
    x.group = GroupLabel::kFemale;
    female.push_back(x);
  }
  const auto rows = FadTable(male, female);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.fad == 0.0);
    CHECK(r.nfad == 0.0);
  }

  std::vector<FadRow> t1 = {{0, 2, 1, 1, 0.5}}, t2 = {{0, 4, 0, 4, 1}};
  NormalizeAcrossModels({&t1, &t2});
  CHECK(t1[0].nfad == 0.25);
  CHECK(t2[0].nfad == 1.0);

  std::ostringstream out;
  WriteFadTable(rows, out);
  CHECK(out.str().rfind("layer,lambda_male,lambda_female,fad,nfad\n", 0) == 0);
  std::ostringstream curve;
  WriteFdrCurve({}, curve);
  CHECK(curve.str() == "tau,far_overall,A,B,fdr\n");
}
