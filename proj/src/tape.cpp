#include "shapecm/autodiff/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace shapecm::ad {

namespace {

std::string shape_str(const ArrayXd& a) { return std::to_string(a.size()); }

[[noreturn]] void shape_error(const char* what, const ArrayXd& a,
                              const ArrayXd& b) {
  throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                              shape_str(a) + " vs " + shape_str(b) + ")");
}

// log(1 + exp(x)) without overflow.
inline double softplus1(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;

}  // namespace

int Tape::check(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(used_))
    throw std::invalid_argument("tape: var does not belong to this tape");
  return v.id;
}

Tape::Node& Tape::fresh_node() {
  if (used_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[used_++];
  n.op = Op::Leaf;
  n.a = n.b = -1;
  n.c0 = 0.0;
  n.i0 = n.i1 = n.i2 = 0;
  n.extra.clear();
  return n;
}

Var Tape::leaf(const ArrayXd& value) {
  Node& n = fresh_node();
  n.value = value;
  return {this, static_cast<int>(used_) - 1};
}

Var Tape::leaf(double value) {
  ArrayXd v(1);
  v[0] = value;
  return leaf(v);
}

double Tape::scalar(Var v) const {
  const ArrayXd& val = value(v);
  if (val.size() != 1)
    throw std::invalid_argument("tape: scalar() on array of size " +
                                shape_str(val));
  return val[0];
}

Var Tape::node_op(Op op, Var a, Var b, double c0, int i0, int i1, int i2) {
  const int ia = a.valid() ? check(a) : -1;
  const int ib = b.valid() ? check(b) : -1;
  Node& n = fresh_node();
  n.op = op;
  n.a = ia;
  n.b = ib;
  n.c0 = c0;
  n.i0 = i0;
  n.i1 = i1;
  n.i2 = i2;
  forward(n);
  return {this, static_cast<int>(used_) - 1};
}

Var Tape::concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::vector<int> ids;
  Eigen::Index total = 0;
  for (Var p : parts) {
    ids.push_back(check(p));
    total += nodes_[ids.back()].value.size();
  }
  Node& n = fresh_node();
  n.op = Op::Concat;
  n.extra = std::move(ids);
  n.value.resize(total);
  Eigen::Index at = 0;
  for (int id : n.extra) {
    const ArrayXd& v = nodes_[id].value;
    n.value.segment(at, v.size()) = v;
    at += v.size();
  }
  return {this, static_cast<int>(used_) - 1};
}

void Tape::forward(Node& n) {
  const ArrayXd* A = n.a >= 0 ? &nodes_[n.a].value : nullptr;
  const ArrayXd* B = n.b >= 0 ? &nodes_[n.b].value : nullptr;
  switch (n.op) {
    case Op::Leaf:
    case Op::Concat:
      break;
    case Op::Add:
      if (A->size() != B->size()) shape_error("add", *A, *B);
      n.value = *A + *B;
      break;
    case Op::Sub:
      if (A->size() != B->size()) shape_error("sub", *A, *B);
      n.value = *A - *B;
      break;
    case Op::Mul:
      if (A->size() != B->size()) shape_error("mul", *A, *B);
      n.value = *A * *B;
      break;
    case Op::Div:
      if (A->size() != B->size()) shape_error("div", *A, *B);
      n.value = *A / *B;
      break;
    case Op::Neg:
      n.value = -*A;
      break;
    case Op::Exp:
      n.value = A->exp();
      break;
    case Op::Log:
      n.value = A->log();
      break;
    case Op::Square:
      n.value = A->square();
      break;
    case Op::Sqrt:
      n.value = A->sqrt();
      break;
    case Op::Tanh:
      n.value = A->tanh();
      break;
    case Op::Softplus:
      n.value = A->unaryExpr([](double x) { return softplus1(x); });
      break;
    case Op::Scale:
      n.value = *A * n.c0;
      break;
    case Op::Shift:
      n.value = *A + n.c0;
      break;
    case Op::ClampMin:
      n.value = A->max(n.c0);
      break;
    case Op::MatVec: {
      if (A->size() != static_cast<Eigen::Index>(n.i0) * n.i1 ||
          B->size() != n.i1)
        shape_error("matvec", *A, *B);
      CRowMap W(A->data(), n.i0, n.i1);
      n.value = (W * B->matrix()).array();
      break;
    }
    case Op::MatMul: {
      if (A->size() != static_cast<Eigen::Index>(n.i0) * n.i1 ||
          B->size() != static_cast<Eigen::Index>(n.i1) * n.i2)
        shape_error("matmul", *A, *B);
      CRowMap MA(A->data(), n.i0, n.i1);
      CRowMap MB(B->data(), n.i1, n.i2);
      n.value.resize(static_cast<Eigen::Index>(n.i0) * n.i2);
      RowMap(n.value.data(), n.i0, n.i2) = MA * MB;
      break;
    }
    case Op::Softmax: {
      const double m = A->maxCoeff();
      n.value = (*A - m).exp();
      n.value /= n.value.sum();
      break;
    }
    case Op::SegmentSoftmax: {
      const int L = n.i0;
      if (L <= 0 || A->size() % L != 0)
        throw std::invalid_argument(
            "segment_softmax: length " + shape_str(*A) +
            " not divisible by segment " + std::to_string(L));
      n.value.resize(A->size());
      for (Eigen::Index s = 0; s < A->size(); s += L) {
        auto seg = A->segment(s, L);
        const double m = seg.maxCoeff();
        auto out = n.value.segment(s, L);
        out = (seg - m).exp();
        out /= out.sum();
      }
      break;
    }
    case Op::SegmentSum: {
      const int L = n.i0;
      if (L <= 0 || A->size() % L != 0)
        throw std::invalid_argument("segment_sum: length " + shape_str(*A) +
                                    " not divisible by segment " +
                                    std::to_string(L));
      const Eigen::Index out_n = A->size() / L;
      n.value.resize(out_n);
      for (Eigen::Index s = 0; s < out_n; ++s)
        n.value[s] = A->segment(s * L, L).sum();
      break;
    }
    case Op::Sum:
      n.value.resize(1);
      n.value[0] = A->sum();
      break;
    case Op::Dot:
      if (A->size() != B->size()) shape_error("dot", *A, *B);
      n.value.resize(1);
      n.value[0] = (*A * *B).sum();
      break;
    case Op::Broadcast:
      if (A->size() != 1) shape_error("broadcast: non-scalar input", *A, *A);
      n.value = ArrayXd::Constant(n.i0, (*A)[0]);
      break;
    case Op::Tile: {
      const Eigen::Index len = A->size();
      n.value.resize(len * n.i0);
      for (int r = 0; r < n.i0; ++r) n.value.segment(r * len, len) = *A;
      break;
    }
    case Op::RepeatInterleave: {
      const Eigen::Index len = A->size();
      n.value.resize(len * n.i0);
      for (Eigen::Index i = 0; i < len; ++i)
        n.value.segment(i * n.i0, n.i0).setConstant((*A)[i]);
      break;
    }
    case Op::Slice:
      if (n.i0 < 0 || n.i1 < 0 || n.i0 + n.i1 > A->size())
        throw std::invalid_argument(
            "slice: range [" + std::to_string(n.i0) + ", " +
            std::to_string(n.i0 + n.i1) + ") out of bounds for " +
            shape_str(*A));
      n.value = A->segment(n.i0, n.i1);
      break;
  }
}

void Tape::backward(Var root) {
  const int rid = check(root);
  if (nodes_[rid].value.size() != 1)
    throw std::invalid_argument("backward: root is not scalar (size " +
                                shape_str(nodes_[rid].value) + ")");
  for (std::size_t i = 0; i < used_; ++i) {
    Node& n = nodes_[i];
    n.grad.resize(n.value.size());
    n.grad.setZero();
  }
  nodes_[rid].grad[0] = 1.0;

  for (int id = rid; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.op == Op::Leaf) continue;
    const ArrayXd& g = n.grad;
    ArrayXd* GA = n.a >= 0 ? &nodes_[n.a].grad : nullptr;
    ArrayXd* GB = n.b >= 0 ? &nodes_[n.b].grad : nullptr;
    const ArrayXd* A = n.a >= 0 ? &nodes_[n.a].value : nullptr;
    const ArrayXd* B = n.b >= 0 ? &nodes_[n.b].value : nullptr;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        *GA += g;
        *GB += g;
        break;
      case Op::Sub:
        *GA += g;
        *GB -= g;
        break;
      case Op::Mul:
        *GA += g * *B;
        *GB += g * *A;
        break;
      case Op::Div:
        *GA += g / *B;
        *GB -= g * *A / B->square();
        break;
      case Op::Neg:
        *GA -= g;
        break;
      case Op::Exp:
        *GA += g * n.value;
        break;
      case Op::Log:
        *GA += g / *A;
        break;
      case Op::Square:
        *GA += 2.0 * g * *A;
        break;
      case Op::Sqrt:
        *GA += 0.5 * g / n.value;
        break;
      case Op::Tanh:
        *GA += g * (1.0 - n.value.square());
        break;
      case Op::Softplus:
        *GA += g / (1.0 + (-*A).exp());
        break;
      case Op::Scale:
        *GA += g * n.c0;
        break;
      case Op::Shift:
        *GA += g;
        break;
      case Op::ClampMin:
        *GA += (*A > n.c0).select(g, 0.0);
        break;
      case Op::MatVec: {
        CRowMap W(A->data(), n.i0, n.i1);
        RowMap GW(GA->data(), n.i0, n.i1);
        GW.noalias() += g.matrix() * B->matrix().transpose();
        GB->matrix().noalias() += W.transpose() * g.matrix();
        break;
      }
      case Op::MatMul: {
        CRowMap MA(A->data(), n.i0, n.i1);
        CRowMap MB(B->data(), n.i1, n.i2);
        CRowMap G(g.data(), n.i0, n.i2);
        RowMap(GA->data(), n.i0, n.i1).noalias() += G * MB.transpose();
        RowMap(GB->data(), n.i1, n.i2).noalias() += MA.transpose() * G;
        break;
      }
      case Op::Softmax: {
        const double s = (g * n.value).sum();
        *GA += n.value * (g - s);
        break;
      }
      case Op::SegmentSoftmax: {
        const int L = n.i0;
        for (Eigen::Index s = 0; s < n.value.size(); s += L) {
          auto p = n.value.segment(s, L);
          auto gs = g.segment(s, L);
          const double dotv = (gs * p).sum();
          GA->segment(s, L) += p * (gs - dotv);
        }
        break;
      }
      case Op::SegmentSum: {
        const int L = n.i0;
        for (Eigen::Index s = 0; s < n.value.size(); ++s)
          GA->segment(s * L, L) += g[s];
        break;
      }
      case Op::Sum:
        *GA += g[0];
        break;
      case Op::Dot:
        *GA += g[0] * *B;
        *GB += g[0] * *A;
        break;
      case Op::Broadcast:
        (*GA)[0] += g.sum();
        break;
      case Op::Tile: {
        const Eigen::Index len = A->size();
        for (int r = 0; r < n.i0; ++r) *GA += g.segment(r * len, len);
        break;
      }
      case Op::RepeatInterleave:
        for (Eigen::Index i = 0; i < A->size(); ++i)
          (*GA)[i] += g.segment(i * n.i0, n.i0).sum();
        break;
      case Op::Slice:
        GA->segment(n.i0, n.i1) += g;
        break;
      case Op::Concat: {
        Eigen::Index at = 0;
        for (int src : n.extra) {
          ArrayXd& gs = nodes_[src].grad;
          gs += g.segment(at, gs.size());
          at += gs.size();
        }
        break;
      }
    }
  }
}

namespace {
Tape& tape_of(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape != b.tape)
    throw std::invalid_argument("op: vars from different tapes");
  return *a.tape;
}
}  // namespace

Var operator+(Var a, Var b) { return tape_of(a, b).node_op(Op::Add, a, b); }
Var operator-(Var a, Var b) { return tape_of(a, b).node_op(Op::Sub, a, b); }
Var operator*(Var a, Var b) { return tape_of(a, b).node_op(Op::Mul, a, b); }
Var operator/(Var a, Var b) { return tape_of(a, b).node_op(Op::Div, a, b); }
Var operator-(Var a) { return a.tape->node_op(Op::Neg, a, {}); }

Var exp(Var x) { return x.tape->node_op(Op::Exp, x, {}); }
Var log(Var x) { return x.tape->node_op(Op::Log, x, {}); }
Var square(Var x) { return x.tape->node_op(Op::Square, x, {}); }
Var sqrt(Var x) { return x.tape->node_op(Op::Sqrt, x, {}); }
Var tanh(Var x) { return x.tape->node_op(Op::Tanh, x, {}); }
Var softplus(Var x) { return x.tape->node_op(Op::Softplus, x, {}); }
Var scale(Var x, double c) { return x.tape->node_op(Op::Scale, x, {}, c); }
Var shift(Var x, double c) { return x.tape->node_op(Op::Shift, x, {}, c); }
Var clamp_min(Var x, double c) {
  return x.tape->node_op(Op::ClampMin, x, {}, c);
}

Var matvec(Var w, Var x, int rows, int cols) {
  return tape_of(w, x).node_op(Op::MatVec, w, x, 0.0, rows, cols);
}
Var matmul(Var a, Var b, int m, int k, int n) {
  return tape_of(a, b).node_op(Op::MatMul, a, b, 0.0, m, k, n);
}

Var softmax(Var x) { return x.tape->node_op(Op::Softmax, x, {}); }
Var segment_softmax(Var x, int segment_len) {
  return x.tape->node_op(Op::SegmentSoftmax, x, {}, 0.0, segment_len);
}
Var segment_sum(Var x, int segment_len) {
  return x.tape->node_op(Op::SegmentSum, x, {}, 0.0, segment_len);
}
Var sum(Var x) { return x.tape->node_op(Op::Sum, x, {}); }
Var dot(Var a, Var b) { return tape_of(a, b).node_op(Op::Dot, a, b); }
Var broadcast(Var scalar, int n) {
  return scalar.tape->node_op(Op::Broadcast, scalar, {}, 0.0, n);
}
Var tile(Var x, int reps) {
  return x.tape->node_op(Op::Tile, x, {}, 0.0, reps);
}
Var repeat_interleave(Var x, int reps) {
  return x.tape->node_op(Op::RepeatInterleave, x, {}, 0.0, reps);
}
Var slice(Var x, int offset, int len) {
  return x.tape->node_op(Op::Slice, x, {}, 0.0, offset, len);
}
Var concat(std::initializer_list<Var> parts) {
  std::vector<Var> v(parts);
  if (v.empty()) throw std::invalid_argument("concat: no inputs");
  return v.front().tape->concat(v);
}

}  // namespace shapecm::ad
