// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation applied to its Vars. Calling backward() on a
// 1x1 output walks the record in reverse and accumulates gradients into every
// node that requires them. Nodes whose inputs need no gradient are recorded
// without a backward closure, so a tape built only from constants doubles as a
// plain forward evaluator.

#include "wmd/core/dense.hpp"

#include <functional>
#include <span>
#include <vector>

namespace wmd::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int index) : tape_(tape), index_(index) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  int index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int index_ = -1;
};

class Tape {
 public:
  /// Receives the node's own forward value and the upstream gradient.
  using Backward = std::function<void(Tape&, const Matrix& out, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Constant referencing external storage; `value` must outlive the tape.
  Var constant_ref(const Matrix& value);
  /// Gradient-carrying leaf referencing external storage.
  Var parameter(const Matrix& value);

  /// Appends an interior node. `backward` is dropped when no input needs a
  /// gradient.
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(int index) const;
  bool needs_grad(int index) const { return nodes_[index].requires_grad; }
  bool needs_grad(Var v) const { return needs_grad(v.index()); }

  /// Adds `g` to the gradient of node `index` (no-op for constants).
  void accumulate(int index, const Matrix& g);

  /// Clears previous gradients, then backpropagates from a 1x1 output.
  void backward(Var output);

  /// Gradient of `v` from the last backward(); zeros when unreached.
  Matrix gradient(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise arithmetic. Shapes must match exactly.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return neg(a); }

Var matmul(Var a, Var b);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(Var a, Var row);
/// a (n x m) * row (1 x m) broadcast over rows.
Var mul_row(Var a, Var row);

Var tanh(Var a);
Var sigmoid(Var a);
Var elu(Var a);
Var relu(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

Var sum(Var a);       ///< 1x1
Var mean(Var a);      ///< 1x1
Var row_sums(Var a);  ///< n x 1

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);

/// Per-row normalization to zero mean and unit variance (no affine part).
Var layer_norm(Var a, double eps = 1e-5);

/// Softmax over each of `groups` equal column blocks of every row.
Var softmax_groups(Var logits, Eigen::Index groups);
Var log_softmax_groups(Var logits, Eigen::Index groups);

/// Forward value is `sample` exactly; the gradient passes to `probs`
/// unchanged (straight-through estimator).
Var straight_through(Var probs, const Matrix& sample);

}  // namespace wmd::ad
