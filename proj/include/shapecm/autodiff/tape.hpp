#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace shapecm::ad {

using Eigen::ArrayXd;

/// Operation kinds recorded on the tape. All values are flat 1-D double
/// arrays; matrices are stored row-major with their dimensions carried in
/// the node payload, scalars are length-1 arrays.
enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Square,
  Sqrt,
  Tanh,
  Softplus,
  Scale,             // x * c0
  Shift,             // x + c0
  ClampMin,          // max(x, c0)
  MatVec,            // (i0 x i1) * vec(i1) -> vec(i0)
  MatMul,            // (i0 x i1) * (i1 x i2) -> (i0 x i2)
  Softmax,           // max-subtracted vector softmax
  SegmentSoftmax,    // softmax within contiguous segments of length i0
  SegmentSum,        // sum within contiguous segments of length i0
  Sum,               // -> scalar
  Dot,               // weighted reduction-sum of two arrays -> scalar
  Broadcast,         // scalar -> length i0
  Tile,              // whole array repeated i0 times
  RepeatInterleave,  // each element repeated i0 times
  Slice,             // x[i0 .. i0+i1)
  Concat,            // inputs listed in `extra`
};

class Tape;

/// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Append-only reverse-mode differentiation tape. Nodes hold their forward
/// value (computed immediately on construction) and, after backward(), the
/// adjoint of the chosen scalar root. Single-threaded per instance;
/// independent tapes may live on independent threads.
class Tape {
 public:
  struct Node {
    Op op = Op::Leaf;
    int a = -1, b = -1;      // input node ids (inputs always precede the node)
    double c0 = 0.0;         // scalar payload (scale/shift/clamp constant)
    int i0 = 0, i1 = 0, i2 = 0;  // dims payload (rows/cols/segments/offsets)
    std::vector<int> extra;  // concat input list
    ArrayXd value;
    ArrayXd grad;
  };

  Var leaf(const ArrayXd& value);
  Var leaf(double value);

  /// Records one operation, evaluating it eagerly. Shape mismatches throw
  /// std::invalid_argument naming both shapes.
  Var node_op(Op op, Var a, Var b, double c0 = 0.0, int i0 = 0, int i1 = 0,
              int i2 = 0);
  Var concat(const std::vector<Var>& parts);

  /// Reverse pass from a scalar-valued root. Rejects non-scalar roots.
  /// Adjoints are recomputed from scratch on every call.
  void backward(Var root);

  const ArrayXd& value(Var v) const { return nodes_[check(v)].value; }
  const ArrayXd& grad(Var v) const { return nodes_[check(v)].grad; }
  double scalar(Var v) const;

  std::size_t size() const { return used_; }
  /// Drops all nodes but keeps their storage: rebuilding a graph with the
  /// same structure then runs allocation-free.
  void clear() { used_ = 0; }

 private:
  int check(Var v) const;
  Node& fresh_node();
  void forward(Node& n);

  std::vector<Node> nodes_;
  std::size_t used_ = 0;
};

// Expression-style free functions. Binary elementwise ops require equal
// lengths; combine with broadcast()/tile() for mixed shapes.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);

Var exp(Var x);
Var log(Var x);
Var square(Var x);
Var sqrt(Var x);
Var tanh(Var x);
Var softplus(Var x);
Var scale(Var x, double c);
Var shift(Var x, double c);
Var clamp_min(Var x, double c);

/// w is flat row-major (rows x cols); x has length cols.
Var matvec(Var w, Var x, int rows, int cols);
/// a is (m x k), b is (k x n), both flat row-major; result is (m x n).
Var matmul(Var a, Var b, int m, int k, int n);

Var softmax(Var x);
Var segment_softmax(Var x, int segment_len);
Var segment_sum(Var x, int segment_len);
Var sum(Var x);
Var dot(Var a, Var b);
Var broadcast(Var scalar, int n);
Var tile(Var x, int reps);
Var repeat_interleave(Var x, int reps);
Var slice(Var x, int offset, int len);
Var concat(std::initializer_list<Var> parts);

}  // namespace shapecm::ad
