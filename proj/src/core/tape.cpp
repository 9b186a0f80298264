// SPDX-License-Identifier: Apache-2.0
#include "wmd/core/tape.hpp"

#include "wmd/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wmd::ad {
namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw ShapeError("operation on an unbound Var");
  return *a.tape();
}

Tape& common_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ShapeError("Vars belong to different tapes");
  return tape_of(a);
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

// Unary elementwise op whose derivative is expressed through input and output.
template <typename Forward, typename Derivative>
Var unary(Var a, Forward f, Derivative d) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr(f);
  const int ia = a.index();
  const Var inputs[] = {a};
  return t.record(std::move(out), inputs,
                  [ia, d](Tape& tape, const Matrix& y, const Matrix& g) {
                    const Matrix& x = tape.value(ia);
                    Matrix dx = g.binaryExpr(x.binaryExpr(y, d), std::multiplies<double>());
                    tape.accumulate(ia, dx);
                  });
}

// Elementwise op with a precomputed output and a whole-array derivative.
template <typename Derivative>
Var vectorized(Var a, Matrix out, Derivative d) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  const Var inputs[] = {a};
  return t.record(std::move(out), inputs, [ia, d](Tape& tape, const Matrix& y, const Matrix& g) {
    const Matrix dydx = d(tape.value(ia), y);
    tape.accumulate(ia, g.cwiseProduct(dydx));
  });
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(index_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar() on a non-1x1 Var");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant_ref(const Matrix& value) {
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(const Matrix& value) {
  Node n;
  n.ref = &value;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.owned = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape() != this) throw ShapeError("input Var recorded on another tape");
    n.requires_grad = n.requires_grad || nodes_[v.index()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(int index) const {
  const Node& n = nodes_[index];
  return n.ref != nullptr ? *n.ref : n.owned;
}

void Tape::accumulate(int index, const Matrix& g) {
  Node& n = nodes_[index];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var output) {
  if (output.tape() != this) throw ShapeError("backward() on a Var from another tape");
  if (output.value().size() != 1) throw ShapeError("backward() requires a 1x1 output");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  const int last = output.index();
  accumulate(last, Matrix::Ones(1, 1));
  for (int i = last; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    // Copy the upstream gradient: accumulate() into earlier nodes never
    // touches node i, but keep the closure independent of storage layout.
    const Matrix upstream = n.grad;
    n.backward(*this, value(i), upstream);
  }
}

Matrix Tape::gradient(Var v) const {
  const Node& n = nodes_[v.index()];
  if (n.grad.size() == 0) return Matrix::Zero(value(v.index()).rows(), value(v.index()).cols());
  return n.grad;
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "add");
  const int ia = a.index(), ib = b.index();
  const Var in[] = {a, b};
  return t.record(a.value() + b.value(), in, [ia, ib](Tape& tape, const Matrix&, const Matrix& g) {
    tape.accumulate(ia, g);
    tape.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "sub");
  const int ia = a.index(), ib = b.index();
  const Var in[] = {a, b};
  return t.record(a.value() - b.value(), in, [ia, ib](Tape& tape, const Matrix&, const Matrix& g) {
    tape.accumulate(ia, g);
    if (tape.needs_grad(ib)) tape.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "mul");
  const int ia = a.index(), ib = b.index();
  const Var in[] = {a, b};
  return t.record(a.value().cwiseProduct(b.value()), in,
                  [ia, ib](Tape& tape, const Matrix&, const Matrix& g) {
                    if (tape.needs_grad(ia)) tape.accumulate(ia, g.cwiseProduct(tape.value(ib)));
                    if (tape.needs_grad(ib)) tape.accumulate(ib, g.cwiseProduct(tape.value(ia)));
                  });
}

Var div(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "div");
  const int ia = a.index(), ib = b.index();
  const Var in[] = {a, b};
  return t.record(a.value().cwiseQuotient(b.value()), in,
                  [ia, ib](Tape& tape, const Matrix& y, const Matrix& g) {
                    const Matrix& bv = tape.value(ib);
                    if (tape.needs_grad(ia)) tape.accumulate(ia, g.cwiseQuotient(bv));
                    if (tape.needs_grad(ib)) {
                      tape.accumulate(ib, -g.cwiseProduct(y).cwiseQuotient(bv));
                    }
                  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  const Var in[] = {a};
  return t.record(a.value() * s, in, [ia, s](Tape& tape, const Matrix&, const Matrix& g) {
    tape.accumulate(ia, g * s);
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  const Var in[] = {a};
  return t.record(a.value().array() + s, in, [ia](Tape& tape, const Matrix&, const Matrix& g) {
    tape.accumulate(ia, g);
  });
}

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  const int ia = a.index(), ib = b.index();
  const Var in[] = {a, b};
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), in, [ia, ib](Tape& tape, const Matrix&, const Matrix& g) {
    if (tape.needs_grad(ia)) tape.accumulate(ia, g * tape.value(ib).transpose());
    if (tape.needs_grad(ib)) tape.accumulate(ib, tape.value(ia).transpose() * g);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = common_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row shape mismatch");
  const int ia = a.index(), ir = row.index();
  const Var in[] = {a, row};
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), in, [ia, ir](Tape& tape, const Matrix&, const Matrix& g) {
    tape.accumulate(ia, g);
    if (tape.needs_grad(ir)) tape.accumulate(ir, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  Tape& t = common_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_row: row shape mismatch");
  const int ia = a.index(), ir = row.index();
  const Var in[] = {a, row};
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return t.record(std::move(out), in, [ia, ir](Tape& tape, const Matrix&, const Matrix& g) {
    if (tape.needs_grad(ia)) {
      Matrix da = g.array().rowwise() * tape.value(ir).row(0).array();
      tape.accumulate(ia, da);
    }
    if (tape.needs_grad(ir)) tape.accumulate(ir, g.cwiseProduct(tape.value(ia)).colwise().sum());
  });
}

Var tanh(Var a) {
  return vectorized(a, a.value().array().tanh().matrix(),
                    [](const Matrix&, const Matrix& y) -> Matrix { return 1.0 - y.array().square(); });
}

Var sigmoid(Var a) {
  const auto x = a.value().array();
  // exp of a nonpositive argument never overflows
  const auto e = (-x.abs()).exp();
  Matrix y = (x >= 0).select(1.0 / (1.0 + e), e / (1.0 + e));
  return vectorized(a, std::move(y),
                    [](const Matrix&, const Matrix& y) -> Matrix { return y.array() * (1.0 - y.array()); });
}

Var elu(Var a) {
  const auto x = a.value().array();
  Matrix y = (x > 0).select(x, x.min(0.0).exp() - 1.0);
  return vectorized(a, std::move(y), [](const Matrix& x, const Matrix& y) -> Matrix {
    return (x.array() > 0).select(Matrix::Ones(x.rows(), x.cols()).array(), y.array() + 1.0);
  });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  const auto x = a.value().array();
  Matrix y = x.max(0.0) + (-x.abs()).exp().log1p();
  return vectorized(a, std::move(y), [](const Matrix& x, const Matrix&) -> Matrix {
    const auto e = (-x.array().abs()).exp();
    return (x.array() >= 0).select(1.0 / (1.0 + e), e / (1.0 + e));
  });
}

Var exp(Var a) {
  return vectorized(a, a.value().array().exp().matrix(),
                    [](const Matrix&, const Matrix& y) -> Matrix { return y; });
}

Var log(Var a) {
  return vectorized(a, a.value().array().log().matrix(),
                    [](const Matrix& x, const Matrix&) -> Matrix { return x.array().inverse(); });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  const Eigen::Index r = a.rows(), c = a.cols();
  const Var in[] = {a};
  return t.record(Matrix::Constant(1, 1, a.value().sum()), in,
                  [ia, r, c](Tape& tape, const Matrix&, const Matrix& g) {
                    tape.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
                  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var row_sums(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  const Eigen::Index c = a.cols();
  const Var in[] = {a};
  Matrix out = a.value().rowwise().sum();
  return t.record(std::move(out), in, [ia, c](Tape& tape, const Matrix&, const Matrix& g) {
    Matrix da = g.replicate(1, c);
    tape.accumulate(ia, da);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ShapeError("concat_cols: Vars from different tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;  // (node, width)
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.index(), p.cols());
    offset += p.cols();
  }
  return t.record(std::move(out), parts,
                  [layout = std::move(layout)](Tape& tape, const Matrix&, const Matrix& g) {
                    Eigen::Index off = 0;
                    for (const auto& [idx, width] : layout) {
                      if (tape.needs_grad(idx)) tape.accumulate(idx, g.middleCols(off, width));
                      off += width;
                    }
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ShapeError("concat_rows: Vars from different tapes");
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    layout.emplace_back(p.index(), p.rows());
    offset += p.rows();
  }
  return t.record(std::move(out), parts,
                  [layout = std::move(layout)](Tape& tape, const Matrix&, const Matrix& g) {
                    Eigen::Index off = 0;
                    for (const auto& [idx, height] : layout) {
                      if (tape.needs_grad(idx)) tape.accumulate(idx, g.middleRows(off, height));
                      off += height;
                    }
                  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  const int ia = a.index();
  const Eigen::Index r = a.rows(), c = a.cols();
  const Var in[] = {a};
  return t.record(a.value().middleCols(start, count), in,
                  [ia, r, c, start, count](Tape& tape, const Matrix&, const Matrix& g) {
                    Matrix da = Matrix::Zero(r, c);
                    da.middleCols(start, count) = g;
                    tape.accumulate(ia, da);
                  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  const int ia = a.index();
  const Eigen::Index r = a.rows(), c = a.cols();
  const Var in[] = {a};
  return t.record(a.value().middleRows(start, count), in,
                  [ia, r, c, start, count](Tape& tape, const Matrix&, const Matrix& g) {
                    Matrix da = Matrix::Zero(r, c);
                    da.middleRows(start, count) = g;
                    tape.accumulate(ia, da);
                  });
}

Var layer_norm(Var a, double eps) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix out(n, d);
  Vector inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    out.row(r) = (x.row(r).array() - mu) * inv_std[r];
  }
  const int ia = a.index();
  const Var in[] = {a};
  return t.record(std::move(out), in,
                  [ia, inv_std = std::move(inv_std)](Tape& tape, const Matrix& y, const Matrix& g) {
                    Matrix dx(y.rows(), y.cols());
                    for (Eigen::Index r = 0; r < y.rows(); ++r) {
                      const double g_mean = g.row(r).mean();
                      const double gy_mean = g.row(r).cwiseProduct(y.row(r)).mean();
                      dx.row(r) = inv_std[r] * (g.row(r).array() - g_mean - y.row(r).array() * gy_mean);
                    }
                    tape.accumulate(ia, dx);
                  });
}

Var softmax_groups(Var logits, Eigen::Index groups) {
  Tape& t = tape_of(logits);
  const Matrix& x = logits.value();
  if (groups <= 0 || x.cols() % groups != 0) throw ShapeError("softmax_groups: bad group count");
  const Eigen::Index classes = x.cols() / groups;
  Matrix p(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index k = 0; k < groups; ++k) {
      auto seg = x.row(r).segment(k * classes, classes);
      const double m = seg.maxCoeff();
      RowVector e = (seg.array() - m).exp();
      p.row(r).segment(k * classes, classes) = e / e.sum();
    }
  }
  const int ia = logits.index();
  const Var in[] = {logits};
  return t.record(std::move(p), in, [ia, groups, classes](Tape& tape, const Matrix& y, const Matrix& g) {
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      for (Eigen::Index k = 0; k < groups; ++k) {
        auto ys = y.row(r).segment(k * classes, classes);
        auto gs = g.row(r).segment(k * classes, classes);
        const double dot = ys.dot(gs);
        dx.row(r).segment(k * classes, classes) = ys.array() * (gs.array() - dot);
      }
    }
    tape.accumulate(ia, dx);
  });
}

Var log_softmax_groups(Var logits, Eigen::Index groups) {
  Tape& t = tape_of(logits);
  const Matrix& x = logits.value();
  if (groups <= 0 || x.cols() % groups != 0) throw ShapeError("log_softmax_groups: bad group count");
  const Eigen::Index classes = x.cols() / groups;
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index k = 0; k < groups; ++k) {
      auto seg = x.row(r).segment(k * classes, classes);
      const double m = seg.maxCoeff();
      const double lse = m + std::log((seg.array() - m).exp().sum());
      out.row(r).segment(k * classes, classes) = seg.array() - lse;
    }
  }
  const int ia = logits.index();
  const Var in[] = {logits};
  return t.record(std::move(out), in, [ia, groups, classes](Tape& tape, const Matrix& y, const Matrix& g) {
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      for (Eigen::Index k = 0; k < groups; ++k) {
        auto ys = y.row(r).segment(k * classes, classes);
        auto gs = g.row(r).segment(k * classes, classes);
        dx.row(r).segment(k * classes, classes) = gs.array() - ys.array().exp() * gs.sum();
      }
    }
    tape.accumulate(ia, dx);
  });
}

Var straight_through(Var probs, const Matrix& sample) {
  Tape& t = tape_of(probs);
  if (sample.rows() != probs.rows() || sample.cols() != probs.cols()) {
    throw ShapeError("straight_through: sample shape differs from probabilities");
  }
  const int ip = probs.index();
  const Var in[] = {probs};
  return t.record(sample, in, [ip](Tape& tape, const Matrix&, const Matrix& g) {
    tape.accumulate(ip, g);
  });
}

}  // namespace wmd::ad
