// tests/unit/test_util.hpp

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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "biaudit/gradkit.hpp"
#include "biaudit/rng.hpp"

namespace biaudit::testing {

/// Builds a scalar from differentiable inputs on the given tape.
using GraphFn = std::function<grad::Var(grad::Tape&, std::vector<grad::Var>&)>;

/// Evaluates fn at the given input values without taking gradients.
inline double EvalGraph(const GraphFn& fn, const std::vector<grad::Tensor>& inputs) {
  grad::Tape tape;
  std::vector<grad::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.Input(t));
  return fn(tape, vars).item();
}

/// Largest relative discrepancy between reverse-mode gradients and central
/// differences with step h. Gradients smaller than `floor` are compared on an
/// absolute scale of `floor`.
inline double MaxGradError(const GraphFn& fn, const std::vector<grad::Tensor>& inputs,
                           double h = 1e-5, double floor = 1e-3) {
  grad::Tape tape;
  std::vector<grad::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.Input(t));
  grad::Var out = fn(tape, vars);
  tape.Backward(out);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const grad::Tensor& analytic = vars[k].grad();
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double numeric = (EvalGraph(fn, plus) - EvalGraph(fn, minus)) / (2.0 * h);
      const double a = analytic.size() ? analytic[i] : 0.0;
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

inline grad::Tensor RandomTensor(const grad::Shape& shape, Rng& rng, double scale = 1.0) {
  grad::Tensor t(shape);
  for (auto& v : t.storage()) v = scale * rng.Normal();
  return t;
}

/// Reduces a tensor-valued output to a scalar with fixed random weights so
/// that every output entry reaches the gradient check.
inline grad::Var WeightedSum(grad::Var x, std::uint64_t seed) {
  Rng rng(seed);
  grad::Tensor w = RandomTensor(x.shape(), rng);
  return grad::Sum(grad::Mul(x, x.tape()->Constant(std::move(w))));
}

}  // namespace biaudit::testing
