#include "hamlearn/autodiff.hpp"

#include <string>

#include "hamlearn/error.hpp"

namespace hamlearn::ad {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows()) throw ShapeError(std::string(op) + " rows", a.rows(), b.rows());
  if (a.cols() != b.cols()) throw ShapeError(std::string(op) + " cols", a.cols(), b.cols());
}

}  // namespace

const Tape::Node& Tape::at(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw ContractError("Var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::push(Node node) {
  compute(node);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::compute(Node& n) const {
  auto in = [this](std::int32_t id) -> const Matrix& { return nodes_[static_cast<std::size_t>(id)].value; };
  switch (n.op) {
    case Op::Param:
    case Op::Constant:
      break;
    case Op::MatMul:
      n.value.noalias() = in(n.a) * in(n.b);
      break;
    case Op::MatMulTN:
      n.value.noalias() = in(n.a).transpose() * in(n.b);
      break;
    case Op::AddBias:
      n.value = in(n.a).colwise() + in(n.b).col(0);
      break;
    case Op::Tanh:
      n.value = in(n.a).array().tanh().matrix();
      break;
    case Op::Add:
      n.value = in(n.a) + in(n.b);
      break;
    case Op::Sub:
      n.value = in(n.a) - in(n.b);
      break;
    case Op::Mul:
      n.value = in(n.a).cwiseProduct(in(n.b));
      break;
    case Op::Scale:
      n.value = n.scalar * in(n.a);
      break;
    case Op::OneMinusSquare:
      n.value = (1.0 - in(n.a).array().square()).matrix();
      break;
    case Op::Cols:
      n.value = in(n.a).middleCols(n.start, n.count);
      break;
    case Op::Rows:
      n.value = in(n.a).middleRows(n.start, n.count);
      break;
    case Op::VStack: {
      const Matrix& top = in(n.a);
      const Matrix& bottom = in(n.b);
      n.value.resize(top.rows() + bottom.rows(), top.cols());
      n.value.topRows(top.rows()) = top;
      n.value.bottomRows(bottom.rows()) = bottom;
      break;
    }
    case Op::Sum:
      n.value = Matrix::Constant(1, 1, in(n.a).sum());
      break;
    case Op::SquaredNorm:
      n.value = Matrix::Constant(1, 1, in(n.a).squaredNorm());
      break;
    case Op::ColumnNormSum:
      n.value = Matrix::Constant(1, 1, in(n.a).colwise().norm().sum());
      break;
  }
}

Var Tape::param(Matrix value) {
  Node n{Op::Param};
  n.grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n{Op::Constant};
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const auto& na = at(a);
  const auto& nb = at(b);
  if (na.value.cols() != nb.value.rows()) throw ShapeError("matmul inner", na.value.cols(), nb.value.rows());
  Node n{Op::MatMul, a.id, b.id};
  n.grad = na.grad || nb.grad;
  return push(std::move(n));
}

Var Tape::matmul_tn(Var a, Var b) {
  const auto& na = at(a);
  const auto& nb = at(b);
  if (na.value.rows() != nb.value.rows()) throw ShapeError("matmul_tn inner", na.value.rows(), nb.value.rows());
  Node n{Op::MatMulTN, a.id, b.id};
  n.grad = na.grad || nb.grad;
  return push(std::move(n));
}

Var Tape::add_bias(Var x, Var bias) {
  const auto& nx = at(x);
  const auto& nb = at(bias);
  if (nb.value.cols() != 1) throw ShapeError("add_bias bias cols", 1, nb.value.cols());
  if (nb.value.rows() != nx.value.rows()) throw ShapeError("add_bias rows", nx.value.rows(), nb.value.rows());
  Node n{Op::AddBias, x.id, bias.id};
  n.grad = nx.grad || nb.grad;
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n{Op::Tanh, a.id};
  n.grad = at(a).grad;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require_same_shape(at(a).value, at(b).value, "add");
  Node n{Op::Add, a.id, b.id};
  n.grad = at(a).grad || at(b).grad;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(at(a).value, at(b).value, "sub");
  Node n{Op::Sub, a.id, b.id};
  n.grad = at(a).grad || at(b).grad;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(at(a).value, at(b).value, "mul");
  Node n{Op::Mul, a.id, b.id};
  n.grad = at(a).grad || at(b).grad;
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n{Op::Scale, a.id};
  n.scalar = s;
  n.grad = at(a).grad;
  return push(std::move(n));
}

Var Tape::one_minus_square(Var a) {
  Node n{Op::OneMinusSquare, a.id};
  n.grad = at(a).grad;
  return push(std::move(n));
}

Var Tape::cols(Var a, Eigen::Index start, Eigen::Index count) {
  const auto& na = at(a);
  if (start < 0 || count < 0 || start + count > na.value.cols())
    throw ShapeError("cols range end", na.value.cols(), start + count);
  Node n{Op::Cols, a.id};
  n.start = start;
  n.count = count;
  n.grad = na.grad;
  return push(std::move(n));
}

Var Tape::rows(Var a, Eigen::Index start, Eigen::Index count) {
  const auto& na = at(a);
  if (start < 0 || count < 0 || start + count > na.value.rows())
    throw ShapeError("rows range end", na.value.rows(), start + count);
  Node n{Op::Rows, a.id};
  n.start = start;
  n.count = count;
  n.grad = na.grad;
  return push(std::move(n));
}

Var Tape::vstack(Var top, Var bottom) {
  if (at(top).value.cols() != at(bottom).value.cols())
    throw ShapeError("vstack cols", at(top).value.cols(), at(bottom).value.cols());
  Node n{Op::VStack, top.id, bottom.id};
  n.grad = at(top).grad || at(bottom).grad;
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n{Op::Sum, a.id};
  n.grad = at(a).grad;
  return push(std::move(n));
}

Var Tape::squared_norm(Var a) {
  Node n{Op::SquaredNorm, a.id};
  n.grad = at(a).grad;
  return push(std::move(n));
}

Var Tape::column_norm_sum(Var a) {
  Node n{Op::ColumnNormSum, a.id};
  n.grad = at(a).grad;
  return push(std::move(n));
}

const Matrix& Tape::value(Var v) const { return at(v).value; }

const Matrix& Tape::adjoint(Var v) const { return at(v).adjoint; }

bool Tape::needs_grad(Var v) const { return at(v).grad; }

Matrix& Tape::adj(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.adjoint.size() == 0) n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

void Tape::set_leaf(Var v, const Matrix& value) {
  at(v);
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.op != Op::Param && n.op != Op::Constant) throw ContractError("set_leaf on a non-leaf node");
  if (n.value.rows() != value.rows()) throw ShapeError("set_leaf rows", n.value.rows(), value.rows());
  if (n.value.cols() != value.cols()) throw ShapeError("set_leaf cols", n.value.cols(), value.cols());
  n.value = value;
}

void Tape::replay() {
  for (auto& n : nodes_) compute(n);
}

void Tape::backward(Var output) {
  const Node& out = at(output);
  if (out.value.rows() != 1 || out.value.cols() != 1)
    throw ContractError("backward requires a scalar (1x1) output node, got " +
                        std::to_string(out.value.rows()) + "x" + std::to_string(out.value.cols()));
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  if (!out.grad) return;
  adj(output.id)(0, 0) = 1.0;

  for (std::int32_t id = output.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad || n.adjoint.size() == 0) continue;
    const Matrix& d = n.adjoint;
    auto val = [this](std::int32_t i) -> const Matrix& { return nodes_[static_cast<std::size_t>(i)].value; };
    auto wants = [this](std::int32_t i) { return i >= 0 && nodes_[static_cast<std::size_t>(i)].grad; };
    switch (n.op) {
      case Op::Param:
      case Op::Constant:
        break;
      case Op::MatMul:
        if (wants(n.a)) adj(n.a).noalias() += d * val(n.b).transpose();
        if (wants(n.b)) adj(n.b).noalias() += val(n.a).transpose() * d;
        break;
      case Op::MatMulTN:
        if (wants(n.a)) adj(n.a).noalias() += val(n.b) * d.transpose();
        if (wants(n.b)) adj(n.b).noalias() += val(n.a) * d;
        break;
      case Op::AddBias:
        if (wants(n.a)) adj(n.a) += d;
        if (wants(n.b)) adj(n.b) += d.rowwise().sum();
        break;
      case Op::Tanh:
        if (wants(n.a)) adj(n.a).array() += d.array() * (1.0 - n.value.array().square());
        break;
      case Op::Add:
        if (wants(n.a)) adj(n.a) += d;
        if (wants(n.b)) adj(n.b) += d;
        break;
      case Op::Sub:
        if (wants(n.a)) adj(n.a) += d;
        if (wants(n.b)) adj(n.b) -= d;
        break;
      case Op::Mul:
        if (wants(n.a)) adj(n.a) += d.cwiseProduct(val(n.b));
        if (wants(n.b)) adj(n.b) += d.cwiseProduct(val(n.a));
        break;
      case Op::Scale:
        if (wants(n.a)) adj(n.a) += n.scalar * d;
        break;
      case Op::OneMinusSquare:
        if (wants(n.a)) adj(n.a).array() -= 2.0 * d.array() * val(n.a).array();
        break;
      case Op::Cols:
        if (wants(n.a)) adj(n.a).middleCols(n.start, n.count) += d;
        break;
      case Op::Rows:
        if (wants(n.a)) adj(n.a).middleRows(n.start, n.count) += d;
        break;
      case Op::VStack: {
        const Eigen::Index top_rows = val(n.a).rows();
        if (wants(n.a)) adj(n.a) += d.topRows(top_rows);
        if (wants(n.b)) adj(n.b) += d.bottomRows(d.rows() - top_rows);
        break;
      }
      case Op::Sum:
        if (wants(n.a)) adj(n.a).array() += d(0, 0);
        break;
      case Op::SquaredNorm:
        if (wants(n.a)) adj(n.a) += (2.0 * d(0, 0)) * val(n.a);
        break;
      case Op::ColumnNormSum:
        if (wants(n.a)) {
          // Subgradient 0 at a zero column.
          const Matrix& x = val(n.a);
          Matrix& da = adj(n.a);
          for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double norm = x.col(c).norm();
            if (norm > 0.0) da.col(c) += (d(0, 0) / norm) * x.col(c);
          }
        }
        break;
    }
    // Intermediate adjoints are not needed after propagation; keep leaves'.
    if (n.op != Op::Param && id != output.id) n.adjoint.resize(0, 0);
  }
}

}  // namespace hamlearn::ad
