// include/biaudit/gradkit.hpp

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

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "biaudit/rng.hpp"

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Tape records every operation in creation order, so parents always precede
// their children and a single reverse sweep computes all gradients. Tensors
// of rank 0 are scalars; rank 1 tensors are treated as a single row wherever
// an operation works row by row.

namespace biaudit::grad {

using Shape = std::vector<std::size_t>;

std::string ShapeString(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor Vector(std::vector<double> v);
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  /// Leading extent for row-wise operations (1 for rank 0 and 1).
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  /// Trailing extent for row-wise operations.
  std::size_t cols() const { return rank() == 0 ? 1 : shape_.back(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }

  void Fill(double v);
  bool AllFinite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Trainable tensor with its accumulated gradient and momentum buffer.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor velocity;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string name, Tensor init);
  void ZeroGrad() { grad.Fill(0.0); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its Tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct BackwardContext {
  const Tensor& out;
  const Tensor& out_grad;
  std::span<const Tensor* const> in;
  /// Accumulators for parent gradients; nullptr where a parent needs none.
  std::span<Tensor* const> in_grad;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var Constant(Tensor value);
  /// Differentiable leaf; its gradient is readable after Backward.
  Var Input(Tensor value);
  /// Leaf bound to a Parameter; Backward adds its gradient into p.grad.
  Var Param(Parameter& p);

  Var Record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var Record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Reverse sweep from a single-element root seeded with gradient 1.
  void Backward(Var root);

  const Tensor& Value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& Grad(std::size_t id) const { return nodes_[id].grad; }
  bool RequiresGrad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  Var Push(Node node);
  // deque keeps node references stable while the tape grows.
  std::deque<Node> nodes_;
};

enum class Reduction { kMean, kSum };

// ---- operators -------------------------------------------------------------

Var MatMul(Var a, Var b);
/// y = x W + b for x [n,in] (or [in]), W [in,out], b [out].
Var Linear(Var x, Var weight, Var bias);
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double factor);
Var Relu(Var x);
Var Sum(Var x);
Var Mean(Var x);

/// Average over the time axis: [T,d] -> [d].
Var MeanPoolTime(Var x);
/// Average over consecutive blocks of seg_len rows: [n*seg_len,d] -> [n,d].
Var MeanPoolSegments(Var x, std::size_t seg_len);

Var Softmax(Var x);
/// Log-sum-exp stabilized softmax cross-entropy. Logits are [C] with one
/// label, or [n,C] with n labels.
Var CrossEntropy(Var logits, std::span<const int> labels,
                 Reduction reduction = Reduction::kMean);
Var CrossEntropy(Var logits, int label);

Var L2NormalizeRows(Var x);
Var L2NormalizeCols(Var x);
/// Row-wise inner products of two [n,d] tensors -> [n].
Var RowDot(Var a, Var b);
Var GatherRows(Var x, std::span<const std::size_t> rows);
Var SliceCols(Var x, std::size_t begin, std::size_t count);
Var ConcatCols(std::span<const Var> parts);
Var ConcatRows(std::span<const Var> parts);
Var Reshape(Var x, Shape shape);

/// Identity forward; backward multiplies the upstream gradient by -scale.
Var GradientReversal(Var x, double scale);
/// Identity forward; no gradient flows to x.
Var Detach(Var x);

/// Straight-through Gumbel-softmax, row-wise. The forward value is the
/// one-hot argmax of logits + noise; the backward pass differentiates
/// softmax((logits + noise) / temperature).
Var GumbelSoftmaxST(Var logits, double temperature, NoiseStream& noise);
/// Same with caller-supplied Gumbel noise of the logits' shape.
Var GumbelSoftmaxST(Var logits, const Tensor& gumbel_noise, double temperature);
Tensor DrawGumbel(const Shape& shape, NoiseStream& noise);

/// Natural-log entropy of each row: [G,V] -> [G].
Var RowEntropy(Var probs);
/// Rows flagged in mask are replaced by fill ([d]).
Var MaskRows(Var x, std::span<const bool> mask, Var fill);
/// Concatenates each row with its neighbours within +-radius inside blocks of
/// seg_len rows (zero padded): [n*seg_len,d] -> [n*seg_len,(2r+1)d].
Var WindowConcat(Var x, std::size_t seg_len, std::size_t radius);
/// Replaces entry (i, labels[i]) of a cosine matrix by cos(acos(c) + margin).
Var AngularMargin(Var cosines, std::span<const int> labels, double margin);

// ---- optimizer -------------------------------------------------------------

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
};

/// v <- momentum * v + g; w <- w - lr * v. Frozen parameters are untouched.
/// All gradients are zeroed afterwards.
void SgdStep(std::span<Parameter* const> params, const SgdConfig& cfg);

}  // namespace biaudit::grad
