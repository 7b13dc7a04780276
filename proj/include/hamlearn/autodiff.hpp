#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace hamlearn::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Handle to a node recorded on a Tape. Only meaningful for the tape that
// issued it.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense matrix values.
//
// Every node holds a matrix; batches are laid out one sample per column.
// Nodes are appended in evaluation order, so the reverse sweep in
// backward() visits them in reverse topological order. Only nodes that
// (transitively) depend on a `param` leaf receive adjoints.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Leaf that receives an adjoint in backward().
  Var param(Matrix value);
  // Leaf that never receives an adjoint.
  Var constant(Matrix value);

  Var matmul(Var a, Var b);     // a * b
  Var matmul_tn(Var a, Var b);  // a^T * b
  Var add_bias(Var x, Var bias);  // x + bias * 1^T, bias is a column
  Var tanh(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  Var one_minus_square(Var a);  // 1 - a∘a
  Var cols(Var a, Eigen::Index start, Eigen::Index count);
  Var rows(Var a, Eigen::Index start, Eigen::Index count);
  Var vstack(Var top, Var bottom);
  Var sum(Var a);           // 1x1
  Var squared_norm(Var a);  // 1x1, Frobenius
  Var column_norm_sum(Var a);  // 1x1, sum of per-column Euclidean norms

  const Matrix& value(Var v) const;
  // Adjoint after backward(). Kept for `param` leaves and the output only;
  // empty for everything else.
  const Matrix& adjoint(Var v) const;
  bool needs_grad(Var v) const;

  // Accumulates d(output)/d(node) into every dependent node. `output` must
  // be 1x1. Previous adjoints are cleared first.
  void backward(Var output);

  // Recomputes every non-leaf value from the current leaf values.
  void replay();
  // Replaces a leaf value (shape must match); call replay() afterwards.
  void set_leaf(Var v, const Matrix& value);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Param,
    Constant,
    MatMul,
    MatMulTN,
    AddBias,
    Tanh,
    Add,
    Sub,
    Mul,
    Scale,
    OneMinusSquare,
    Cols,
    Rows,
    VStack,
    Sum,
    SquaredNorm,
    ColumnNormSum,
  };

  struct Node {
    Op op;
    std::int32_t a = -1;
    std::int32_t b = -1;
    double scalar = 0.0;
    Eigen::Index start = 0;
    Eigen::Index count = 0;
    bool grad = false;
    Matrix value{};
    Matrix adjoint{};
  };

  Var push(Node node);
  void compute(Node& n) const;
  const Node& at(Var v) const;
  Matrix& adj(std::int32_t id);

  std::vector<Node> nodes_;
};

}  // namespace hamlearn::ad
