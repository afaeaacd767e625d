// src/gradkit.cpp

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

#include "biaudit/gradkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace biaudit::grad {

namespace {

std::size_t Product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void ShapeFail(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": shape mismatch " + ShapeString(a) + " vs " +
                              ShapeString(b));
}

Tape& TapeOf(Var v) {
  if (v.tape() == nullptr) throw std::logic_error("operation on a detached Var");
  return *v.tape();
}

void Accumulate(Tensor* dst, const Tensor& src) {
  if (dst == nullptr) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

}  // namespace

std::string ShapeString(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(Product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (Product(shape_) != data_.size())
    throw std::invalid_argument("tensor: shape " + ShapeString(shape_) + " needs " +
                                std::to_string(Product(shape_)) + " values, got " +
                                std::to_string(data_.size()));
}

Tensor Tensor::Vector(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("tensor: ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw std::invalid_argument("item() on tensor of shape " + ShapeString(shape_));
  return data_[0];
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Parameter::Parameter(std::string n, Tensor init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(value.shape()),
      velocity(value.shape()) {}

// ---- tape ------------------------------------------------------------------

const Tensor& Var::value() const { return tape_->Value(id_); }
const Tensor& Var::grad() const { return tape_->Grad(id_); }

Var Tape::Push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::Constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return Push(std::move(n));
}

Var Tape::Input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return Push(std::move(n));
}

Var Tape::Param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return Push(std::move(n));
}

Var Tape::Record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return Record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::Record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (Var p : parents) {
    if (p.tape() != this) throw std::logic_error("mixing Vars from different tapes");
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Push(std::move(n));
}

void Tape::Backward(Var root) {
  if (root.tape() != this) throw std::logic_error("Backward: root from another tape");
  if (nodes_[root.id()].value.size() != 1)
    throw std::invalid_argument("Backward: root must be a single element, got " +
                                ShapeString(nodes_[root.id()].value.shape()));
  const std::size_t end = root.id() + 1;
  for (std::size_t i = 0; i < end; ++i) {
    auto& n = nodes_[i];
    if (n.requires_grad)
      n.grad = Tensor(n.value.shape(), 0.0);
    else
      n.grad = Tensor();
  }
  nodes_[root.id()].grad.Fill(1.0);

  std::vector<const Tensor*> in;
  std::vector<Tensor*> in_grad;
  for (std::size_t i = end; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    in.clear();
    in_grad.clear();
    for (std::size_t p : n.parents) {
      in.push_back(&nodes_[p].value);
      in_grad.push_back(nodes_[p].requires_grad ? &nodes_[p].grad : nullptr);
    }
    n.backward(BackwardContext{n.value, n.grad, in, in_grad});
  }
  for (std::size_t i = 0; i < end; ++i) {
    auto& n = nodes_[i];
    if (n.param != nullptr) Accumulate(&n.param->grad, n.grad);
  }
}

// ---- dense kernels ---------------------------------------------------------

namespace {

// c[n,m] += a[n,k] * b[k,m]
void Gemm(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
          std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[n,k] += g[n,m] * b[k,m]^T
void GemmBt(const double* g, const double* b, double* c, std::size_t n, std::size_t k,
            std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* gi = g + i * m;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * m;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += gi[j] * bp[j];
      ci[p] += s;
    }
  }
}

// c[k,m] += a[n,k]^T * g[n,m]
void GemmAt(const double* a, const double* g, double* c, std::size_t n, std::size_t k,
            std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += aip * gi[j];
    }
  }
}

struct Dims2 {
  std::size_t rows, cols;
};

Dims2 AsMatrix(const Tensor& t) { return {t.rows(), t.cols()}; }

void RequireRank(const char* op, Var v, std::size_t lo, std::size_t hi) {
  if (v.value().rank() < lo || v.value().rank() > hi)
    throw std::invalid_argument(std::string(op) + ": unsupported shape " +
                                ShapeString(v.shape()));
}

}  // namespace

// ---- operators -------------------------------------------------------------

Var MatMul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.shape()[1] != B.shape()[0])
    ShapeFail("matmul", A.shape(), B.shape());
  const std::size_t n = A.shape()[0], k = A.shape()[1], m = B.shape()[1];
  Tensor out(Shape{n, m});
  Gemm(A.data().data(), B.data().data(), out.data().data(), n, k, m);
  return TapeOf(a).Record(std::move(out), {a, b}, [n, k, m](const BackwardContext& c) {
    const double* g = c.out_grad.data().data();
    if (c.in_grad[0]) GemmBt(g, c.in[1]->data().data(), c.in_grad[0]->data().data(), n, k, m);
    if (c.in_grad[1]) GemmAt(c.in[0]->data().data(), g, c.in_grad[1]->data().data(), n, k, m);
  });
}

Var Linear(Var x, Var weight, Var bias) {
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  const Tensor& B = bias.value();
  if (X.rank() < 1 || X.rank() > 2 || W.rank() != 2 || X.cols() != W.shape()[0])
    throw std::invalid_argument("linear: input shape " + ShapeString(X.shape()) +
                                " incompatible with weight shape " +
                                ShapeString(W.shape()));
  if (B.rank() != 1 || B.shape()[0] != W.shape()[1])
    throw std::invalid_argument("linear: bias shape " + ShapeString(B.shape()) +
                                " incompatible with weight shape " +
                                ShapeString(W.shape()));
  const std::size_t n = X.rows(), k = W.shape()[0], m = W.shape()[1];
  Shape out_shape = X.rank() == 2 ? Shape{n, m} : Shape{m};
  Tensor out(out_shape);
  double* o = out.data().data();
  for (std::size_t i = 0; i < n; ++i)
    std::copy(B.data().begin(), B.data().end(), o + i * m);
  Gemm(X.data().data(), W.data().data(), o, n, k, m);
  return TapeOf(x).Record(std::move(out), {x, weight, bias},
                          [n, k, m](const BackwardContext& c) {
    const double* g = c.out_grad.data().data();
    if (c.in_grad[0])
      GemmBt(g, c.in[1]->data().data(), c.in_grad[0]->data().data(), n, k, m);
    if (c.in_grad[1])
      GemmAt(c.in[0]->data().data(), g, c.in_grad[1]->data().data(), n, k, m);
    if (c.in_grad[2]) {
      double* gb = c.in_grad[2]->data().data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
    }
  });
}

namespace {

template <typename Fwd, typename Bwd>
Var Elementwise2(const char* op, Var a, Var b, Fwd fwd, Bwd bwd) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) ShapeFail(op, A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(A[i], B[i]);
  return TapeOf(a).Record(std::move(out), {a, b}, [bwd](const BackwardContext& c) {
    for (std::size_t i = 0; i < c.out.size(); ++i) {
      auto [ga, gb] = bwd((*c.in[0])[i], (*c.in[1])[i], c.out_grad[i]);
      if (c.in_grad[0]) (*c.in_grad[0])[i] += ga;
      if (c.in_grad[1]) (*c.in_grad[1])[i] += gb;
    }
  });
}

}  // namespace

Var Add(Var a, Var b) {
  return Elementwise2(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair{g, g}; });
}

Var Sub(Var a, Var b) {
  return Elementwise2(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair{g, -g}; });
}

Var Mul(Var a, Var b) {
  return Elementwise2(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair{g * y, g * x}; });
}

Var Scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.storage()) v *= factor;
  return TapeOf(a).Record(std::move(out), {a}, [factor](const BackwardContext& c) {
    for (std::size_t i = 0; i < c.out.size(); ++i)
      (*c.in_grad[0])[i] += factor * c.out_grad[i];
  });
}

Var Relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return TapeOf(x).Record(std::move(out), {x}, [](const BackwardContext& c) {
    for (std::size_t i = 0; i < c.out.size(); ++i)
      if ((*c.in[0])[i] > 0.0) (*c.in_grad[0])[i] += c.out_grad[i];
  });
}

Var Sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return TapeOf(x).Record(Tensor::Scalar(s), {x}, [](const BackwardContext& c) {
    const double g = c.out_grad[0];
    for (auto& v : c.in_grad[0]->storage()) v += g;
  });
}

Var Mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  return Scale(Sum(x), 1.0 / static_cast<double>(n));
}

Var MeanPoolTime(Var x) {
  RequireRank("mean_pool_time", x, 2, 2);
  if (x.shape()[0] == 0) throw std::invalid_argument("empty sequence");
  return Reshape(MeanPoolSegments(x, x.shape()[0]), Shape{x.shape()[1]});
}

Var MeanPoolSegments(Var x, std::size_t seg_len) {
  RequireRank("mean_pool_segments", x, 2, 2);
  const std::size_t total = x.shape()[0], d = x.shape()[1];
  if (seg_len == 0 || total == 0) throw std::invalid_argument("empty sequence");
  if (total % seg_len != 0)
    throw std::invalid_argument("mean_pool_segments: " + std::to_string(total) +
                                " rows not divisible by " + std::to_string(seg_len));
  const std::size_t n = total / seg_len;
  const double inv = 1.0 / static_cast<double>(seg_len);
  const Tensor& X = x.value();
  Tensor out(Shape{n, d});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < seg_len; ++t)
      for (std::size_t j = 0; j < d; ++j) out.at(s, j) += X.at(s * seg_len + t, j);
    for (std::size_t j = 0; j < d; ++j) out.at(s, j) *= inv;
  }
  return TapeOf(x).Record(std::move(out), {x}, [n, seg_len, d, inv](const BackwardContext& c) {
    Tensor& gx = *c.in_grad[0];
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = 0; t < seg_len; ++t)
        for (std::size_t j = 0; j < d; ++j) gx.at(s * seg_len + t, j) += inv * c.out_grad.at(s, j);
  });
}

namespace {

// Numerically stable softmax of one row of length m.
void SoftmaxRow(const double* z, double* y, std::size_t m, double inv_temp = 1.0) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, z[j] * inv_temp);
  double s = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    y[j] = std::exp(z[j] * inv_temp - mx);
    s += y[j];
  }
  for (std::size_t j = 0; j < m; ++j) y[j] /= s;
}

// dz += scale * y * (dy - <dy, y>)
void SoftmaxRowBackward(const double* y, const double* dy, double* dz, std::size_t m,
                        double scale = 1.0) {
  double dot = 0.0;
  for (std::size_t j = 0; j < m; ++j) dot += dy[j] * y[j];
  for (std::size_t j = 0; j < m; ++j) dz[j] += scale * y[j] * (dy[j] - dot);
}

}  // namespace

Var Softmax(Var x) {
  RequireRank("softmax", x, 1, 2);
  auto [n, m] = AsMatrix(x.value());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    SoftmaxRow(x.value().data().data() + i * m, out.data().data() + i * m, m);
  return TapeOf(x).Record(std::move(out), {x}, [n, m](const BackwardContext& c) {
    for (std::size_t i = 0; i < n; ++i)
      SoftmaxRowBackward(c.out.data().data() + i * m, c.out_grad.data().data() + i * m,
                         c.in_grad[0]->data().data() + i * m, m);
  });
}

Var CrossEntropy(Var logits, std::span<const int> labels, Reduction reduction) {
  RequireRank("cross_entropy", logits, 1, 2);
  auto [n, m] = AsMatrix(logits.value());
  if (labels.size() != n)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= m)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(l) +
                                  " out of range for " + std::to_string(m) + " classes");
  const Tensor& Z = logits.value();
  Tensor probs(Shape{n, m});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = Z.data().data() + i * m;
    double mx = *std::max_element(z, z + m);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(z[j] - mx);
    const double lse = mx + std::log(s);
    total += lse - z[labels[i]];
    for (std::size_t j = 0; j < m; ++j) probs.at(i, j) = std::exp(z[j] - lse);
  }
  const double norm = reduction == Reduction::kMean ? 1.0 / static_cast<double>(n) : 1.0;
  std::vector<int> lab(labels.begin(), labels.end());
  return TapeOf(logits).Record(
      Tensor::Scalar(total * norm), {logits},
      [probs = std::move(probs), lab = std::move(lab), n, m, norm](const BackwardContext& c) {
        const double g = c.out_grad[0] * norm;
        Tensor& gz = *c.in_grad[0];
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) gz[i * m + j] += g * probs.at(i, j);
          gz[i * m + static_cast<std::size_t>(lab[i])] -= g;
        }
      });
}

Var CrossEntropy(Var logits, int label) {
  const int labels[1] = {label};
  return CrossEntropy(logits, labels, Reduction::kMean);
}

namespace {

[[noreturn]] void DegenerateNorm(const char* op) {
  throw std::domain_error(std::string(op) + ": degenerate norm");
}

}  // namespace

Var L2NormalizeRows(Var x) {
  RequireRank("l2_normalize_rows", x, 1, 2);
  auto [n, m] = AsMatrix(x.value());
  Tensor out(x.shape());
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += x.value()[i * m + j] * x.value()[i * m + j];
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 0.0)) DegenerateNorm("l2_normalize_rows");
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x.value()[i * m + j] / norms[i];
  }
  return TapeOf(x).Record(std::move(out), {x},
                          [norms = std::move(norms), n, m](const BackwardContext& c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = c.out.data().data() + i * m;
      const double* dy = c.out_grad.data().data() + i * m;
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += y[j] * dy[j];
      double* dx = c.in_grad[0]->data().data() + i * m;
      for (std::size_t j = 0; j < m; ++j) dx[j] += (dy[j] - y[j] * dot) / norms[i];
    }
  });
}

Var L2NormalizeCols(Var x) {
  RequireRank("l2_normalize_cols", x, 2, 2);
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  const Tensor& X = x.value();
  Tensor out(x.shape());
  std::vector<double> norms(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) norms[j] += X.at(i, j) * X.at(i, j);
  for (auto& v : norms) {
    v = std::sqrt(v);
    if (!(v > 0.0)) DegenerateNorm("l2_normalize_cols");
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = X.at(i, j) / norms[j];
  return TapeOf(x).Record(std::move(out), {x},
                          [norms = std::move(norms), n, m](const BackwardContext& c) {
    std::vector<double> dot(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) dot[j] += c.out.at(i, j) * c.out_grad.at(i, j);
    Tensor& gx = *c.in_grad[0];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        gx.at(i, j) += (c.out_grad.at(i, j) - c.out.at(i, j) * dot[j]) / norms[j];
  });
}

Var RowDot(Var a, Var b) {
  if (a.shape() != b.shape()) ShapeFail("row_dot", a.shape(), b.shape());
  RequireRank("row_dot", a, 1, 2);
  auto [n, m] = AsMatrix(a.value());
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a.value()[i * m + j] * b.value()[i * m + j];
    out[i] = s;
  }
  return TapeOf(a).Record(std::move(out), {a, b}, [n, m](const BackwardContext& c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double g = c.out_grad[i];
      for (std::size_t j = 0; j < m; ++j) {
        if (c.in_grad[0]) (*c.in_grad[0])[i * m + j] += g * (*c.in[1])[i * m + j];
        if (c.in_grad[1]) (*c.in_grad[1])[i * m + j] += g * (*c.in[0])[i * m + j];
      }
    }
  });
}

Var GatherRows(Var x, std::span<const std::size_t> rows) {
  RequireRank("gather_rows", x, 2, 2);
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor out(Shape{idx.size(), m});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n)
      throw std::invalid_argument("gather_rows: row " + std::to_string(idx[r]) +
                                  " out of range for " + ShapeString(x.shape()));
    std::copy_n(x.value().data().data() + idx[r] * m, m, out.data().data() + r * m);
  }
  return TapeOf(x).Record(std::move(out), {x}, [idx = std::move(idx), m](const BackwardContext& c) {
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < m; ++j)
        (*c.in_grad[0])[idx[r] * m + j] += c.out_grad[r * m + j];
  });
}

Var SliceCols(Var x, std::size_t begin, std::size_t count) {
  RequireRank("slice_cols", x, 2, 2);
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (begin + count > m)
    throw std::invalid_argument("slice_cols: columns [" + std::to_string(begin) + "," +
                                std::to_string(begin + count) + ") exceed " +
                                ShapeString(x.shape()));
  Tensor out(Shape{n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = x.value().at(i, begin + j);
  return TapeOf(x).Record(std::move(out), {x}, [n, begin, count](const BackwardContext& c) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j)
        c.in_grad[0]->at(i, begin + j) += c.out_grad.at(i, j);
  });
}

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t n = parts[0].shape().at(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    RequireRank("concat_cols", p, 2, 2);
    if (p.shape()[0] != n) ShapeFail("concat_cols", parts[0].shape(), p.shape());
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor out(Shape{n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out.at(i, off + j) = parts[k].value().at(i, j);
    off += widths[k];
  }
  return TapeOf(parts[0]).Record(std::move(out), parts,
                                 [widths = std::move(widths), n](const BackwardContext& c) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (c.in_grad[k])
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j)
            c.in_grad[k]->at(i, j) += c.out_grad.at(i, off + j);
      off += widths[k];
    }
  });
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t m = parts[0].value().cols();
  std::vector<std::size_t> sizes;
  std::size_t rows = 0;
  for (Var p : parts) {
    RequireRank("concat_rows", p, 1, 2);
    if (p.value().cols() != m) ShapeFail("concat_rows", parts[0].shape(), p.shape());
    sizes.push_back(p.value().size());
    rows += p.value().rows();
  }
  Tensor out(Shape{rows, m});
  std::size_t off = 0;
  for (Var p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
    off += p.value().size();
  }
  return TapeOf(parts[0]).Record(std::move(out), parts,
                                 [sizes = std::move(sizes)](const BackwardContext& c) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (c.in_grad[k])
        for (std::size_t i = 0; i < sizes[k]; ++i) (*c.in_grad[k])[i] += c.out_grad[off + i];
      off += sizes[k];
    }
  });
}

Var Reshape(Var x, Shape shape) {
  if (Product(shape) != x.value().size()) ShapeFail("reshape", x.shape(), shape);
  Tensor out(std::move(shape), std::vector<double>(x.value().data().begin(), x.value().data().end()));
  return TapeOf(x).Record(std::move(out), {x}, [](const BackwardContext& c) {
    Accumulate(c.in_grad[0], c.out_grad);
  });
}

Var GradientReversal(Var x, double scale) {
  if (!(scale >= 0.0)) throw std::invalid_argument("gradient_reversal: scale must be >= 0");
  const double factor = -scale;
  return TapeOf(x).Record(x.value(), {x}, [factor](const BackwardContext& c) {
    for (std::size_t i = 0; i < c.out.size(); ++i) (*c.in_grad[0])[i] += factor * c.out_grad[i];
  });
}

Var Detach(Var x) { return TapeOf(x).Constant(x.value()); }

Tensor DrawGumbel(const Shape& shape, NoiseStream& noise) {
  Tensor g(shape);
  for (auto& v : g.storage()) v = noise.NextGumbel();
  return g;
}

Var GumbelSoftmaxST(Var logits, double temperature, NoiseStream& noise) {
  return GumbelSoftmaxST(logits, DrawGumbel(logits.shape(), noise), temperature);
}

Var GumbelSoftmaxST(Var logits, const Tensor& gumbel_noise, double temperature) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("gumbel_softmax_st: temperature must be positive");
  RequireRank("gumbel_softmax_st", logits, 1, 2);
  if (gumbel_noise.shape() != logits.shape())
    ShapeFail("gumbel_softmax_st", logits.shape(), gumbel_noise.shape());
  auto [n, m] = AsMatrix(logits.value());
  Tensor perturbed = logits.value();
  for (std::size_t i = 0; i < perturbed.size(); ++i) perturbed[i] += gumbel_noise[i];
  Tensor soft(logits.shape());
  Tensor hard(logits.shape());
  const double inv_t = 1.0 / temperature;
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = perturbed.data().data() + i * m;
    SoftmaxRow(z, soft.data().data() + i * m, m, inv_t);
    hard[i * m + static_cast<std::size_t>(std::max_element(z, z + m) - z)] = 1.0;
  }
  return TapeOf(logits).Record(std::move(hard), {logits},
                               [soft = std::move(soft), n, m, inv_t](const BackwardContext& c) {
    for (std::size_t i = 0; i < n; ++i)
      SoftmaxRowBackward(soft.data().data() + i * m, c.out_grad.data().data() + i * m,
                         c.in_grad[0]->data().data() + i * m, m, inv_t);
  });
}

Var RowEntropy(Var probs) {
  RequireRank("row_entropy", probs, 1, 2);
  auto [n, m] = AsMatrix(probs.value());
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    double h = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double p = probs.value()[i * m + j];
      if (p > 0.0) h -= p * std::log(p);
    }
    out[i] = h;
  }
  return TapeOf(probs).Record(std::move(out), {probs}, [n, m](const BackwardContext& c) {
    constexpr double kFloor = 1e-300;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double p = std::max((*c.in[0])[i * m + j], kFloor);
        (*c.in_grad[0])[i * m + j] -= c.out_grad[i] * (std::log(p) + 1.0);
      }
  });
}

Var MaskRows(Var x, std::span<const bool> mask, Var fill) {
  RequireRank("mask_rows", x, 2, 2);
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (mask.size() != n)
    throw std::invalid_argument("mask_rows: mask of length " + std::to_string(mask.size()) +
                                " for " + ShapeString(x.shape()));
  if (fill.value().size() != m) ShapeFail("mask_rows", x.shape(), fill.shape());
  std::vector<bool> mk(mask.begin(), mask.end());
  Tensor out = x.value();
  for (std::size_t i = 0; i < n; ++i)
    if (mk[i])
      std::copy(fill.value().data().begin(), fill.value().data().end(),
                out.data().begin() + static_cast<std::ptrdiff_t>(i * m));
  return TapeOf(x).Record(std::move(out), {x, fill}, [mk = std::move(mk), n, m](const BackwardContext& c) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double g = c.out_grad[i * m + j];
        if (mk[i]) {
          if (c.in_grad[1]) (*c.in_grad[1])[j] += g;
        } else if (c.in_grad[0]) {
          (*c.in_grad[0])[i * m + j] += g;
        }
      }
  });
}

Var WindowConcat(Var x, std::size_t seg_len, std::size_t radius) {
  RequireRank("window_concat", x, 2, 2);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (seg_len == 0 || n % seg_len != 0)
    throw std::invalid_argument("window_concat: " + std::to_string(n) +
                                " rows not divisible into segments of " + std::to_string(seg_len));
  const std::size_t width = 2 * radius + 1;
  Tensor out(Shape{n, width * d});
  // Source row for output row t at window slot k, or n if padded.
  auto source = [=](std::size_t t, std::size_t k) -> std::size_t {
    const std::size_t base = (t / seg_len) * seg_len;
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t - base) +
                             static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(radius);
    if (s < 0 || s >= static_cast<std::ptrdiff_t>(seg_len)) return n;
    return base + static_cast<std::size_t>(s);
  };
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t k = 0; k < width; ++k) {
      const std::size_t s = source(t, k);
      if (s == n) continue;
      for (std::size_t j = 0; j < d; ++j) out.at(t, k * d + j) = x.value().at(s, j);
    }
  return TapeOf(x).Record(std::move(out), {x}, [=](const BackwardContext& c) {
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t k = 0; k < width; ++k) {
        const std::size_t s = source(t, k);
        if (s == n) continue;
        for (std::size_t j = 0; j < d; ++j) c.in_grad[0]->at(s, j) += c.out_grad.at(t, k * d + j);
      }
  });
}

Var AngularMargin(Var cosines, std::span<const int> labels, double margin) {
  RequireRank("angular_margin", cosines, 1, 2);
  auto [n, m] = AsMatrix(cosines.value());
  if (labels.size() != n)
    throw std::invalid_argument("angular_margin: label count does not match rows");
  const double cm = std::cos(margin), sm = std::sin(margin);
  std::vector<int> lab(labels.begin(), labels.end());
  Tensor out = cosines.value();
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= m)
      throw std::invalid_argument("angular_margin: label out of range");
    double& v = out[i * m + static_cast<std::size_t>(lab[i])];
    const double c = std::clamp(v, -1.0, 1.0);
    v = c * cm - std::sqrt(1.0 - c * c) * sm;
  }
  return TapeOf(cosines).Record(std::move(out), {cosines},
                                [lab = std::move(lab), n, m, cm, sm](const BackwardContext& c) {
    Accumulate(c.in_grad[0], c.out_grad);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = i * m + static_cast<std::size_t>(lab[i]);
      const double x = std::clamp((*c.in[0])[k], -1.0, 1.0);
      const double s = std::sqrt(std::max(1.0 - x * x, 1e-12));
      // d/dx cos(acos(x) + margin) = cos(margin) + x sin(margin) / sqrt(1 - x^2)
      (*c.in_grad[0])[k] += c.out_grad[k] * (cm + x * sm / s - 1.0);
    }
  });
}

void SgdStep(std::span<Parameter* const> params, const SgdConfig& cfg) {
  for (Parameter* p : params) {
    if (!p->frozen) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        p->velocity[i] = cfg.momentum * p->velocity[i] + p->grad[i];
        p->value[i] -= cfg.learning_rate * p->velocity[i];
      }
    }
    p->ZeroGrad();
  }
}

}  // namespace biaudit::grad
