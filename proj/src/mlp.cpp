#include "hamlearn/mlp.hpp"

#include <cmath>
#include <random>
#include <string>

#include "hamlearn/error.hpp"
#include "hamlearn/rng.hpp"

namespace hamlearn {

void MlpSpec::validate() const {
  if (layer_sizes.size() < 3)
    throw ContractError("MLP needs at least one hidden layer, got " + std::to_string(layer_sizes.size()) +
                        " layer sizes");
  for (int s : layer_sizes)
    if (s <= 0) throw ContractError("MLP layer sizes must be positive");
  if (layer_sizes.back() != 1) throw ContractError("MLP output dimension must be 1 (scalar energy)");
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += static_cast<std::size_t>(layer_sizes[l + 1]) * static_cast<std::size_t>(layer_sizes[l] + 1);
  return n;
}

MlpParams MlpParams::zeros(const MlpSpec& spec) {
  spec.validate();
  MlpParams p;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    p.weights.push_back(Matrix::Zero(spec.layer_sizes[l + 1], spec.layer_sizes[l]));
    p.biases.push_back(Vector::Zero(spec.layer_sizes[l + 1]));
  }
  return p;
}

void MlpParams::check_shapes(const MlpSpec& spec) const {
  spec.validate();
  if (weights.size() != spec.num_layers() || biases.size() != spec.num_layers())
    throw ShapeError("MLP layer count", static_cast<std::ptrdiff_t>(spec.num_layers()),
                     static_cast<std::ptrdiff_t>(weights.size()));
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    if (weights[l].rows() != spec.layer_sizes[l + 1])
      throw ShapeError("weight rows, layer " + std::to_string(l), spec.layer_sizes[l + 1], weights[l].rows());
    if (weights[l].cols() != spec.layer_sizes[l])
      throw ShapeError("weight cols, layer " + std::to_string(l), spec.layer_sizes[l], weights[l].cols());
    if (biases[l].size() != spec.layer_sizes[l + 1])
      throw ShapeError("bias size, layer " + std::to_string(l), spec.layer_sizes[l + 1], biases[l].size());
  }
}

bool MlpParams::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

std::size_t MlpParams::size() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

Vector MlpParams::flatten() const {
  Vector flat(static_cast<Eigen::Index>(size()));
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.segment(at, weights[l].size()) = Eigen::Map<const Vector>(weights[l].data(), weights[l].size());
    at += weights[l].size();
    flat.segment(at, biases[l].size()) = biases[l];
    at += biases[l].size();
  }
  return flat;
}

void MlpParams::unflatten(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != static_cast<Eigen::Index>(size()))
    throw ShapeError("flat parameter vector", static_cast<std::ptrdiff_t>(size()), flat.size());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::Map<Vector>(weights[l].data(), weights[l].size()) = flat.segment(at, weights[l].size());
    at += weights[l].size();
    biases[l] = flat.segment(at, biases[l].size());
    at += biases[l].size();
  }
}

bool MlpParams::operator==(const MlpParams& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols()) return false;
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  }
  return true;
}

MlpParams init_gaussian(const MlpSpec& spec, std::uint64_t seed) {
  MlpParams p = MlpParams::zeros(spec);
  Rng rng = make_rng(seed, {0x4d4c50});
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[l])));
    Matrix& w = p.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = normal(rng);
  }
  return p;
}

namespace {

void check_input(const MlpParams& params, Eigen::Index rows) {
  if (params.weights.empty()) throw ContractError("MLP has no layers");
  if (params.weights.front().cols() != rows) throw ShapeError("MLP input", params.weights.front().cols(), rows);
}

// Hidden activations a_1..a_{L-1} for a batch.
std::vector<Matrix> hidden_activations(const MlpParams& params, const Matrix& x) {
  std::vector<Matrix> acts;
  acts.reserve(params.weights.size() - 1);
  const Matrix* prev = &x;
  for (std::size_t l = 0; l + 1 < params.weights.size(); ++l) {
    Matrix z = params.weights[l] * *prev;
    z.colwise() += params.biases[l];
    acts.push_back(z.array().tanh().matrix());
    prev = &acts.back();
  }
  return acts;
}

}  // namespace

Eigen::RowVectorXd mlp_eval_batch(const MlpParams& params, const Matrix& x) {
  check_input(params, x.rows());
  const auto acts = hidden_activations(params, x);
  Eigen::RowVectorXd out = params.weights.back() * acts.back();
  out.array() += params.biases.back()(0);
  return out;
}

Matrix mlp_input_gradient_batch(const MlpParams& params, const Matrix& x) {
  check_input(params, x.rows());
  const auto acts = hidden_activations(params, x);
  const std::size_t hidden = acts.size();
  Matrix g = params.weights.back().transpose() * Eigen::RowVectorXd::Ones(x.cols());
  for (std::size_t i = hidden; i-- > 0;) {
    Matrix delta = g.cwiseProduct((1.0 - acts[i].array().square()).matrix());
    g.noalias() = params.weights[i].transpose() * delta;
  }
  return g;
}

double mlp_eval(const MlpSpec& spec, const MlpParams& params, const Vector& x) {
  if (x.size() != spec.input_dim()) throw ShapeError("mlp_eval input", spec.input_dim(), x.size());
  params.check_shapes(spec);
  return mlp_eval_batch(params, x)(0);
}

Vector mlp_input_gradient(const MlpSpec& spec, const MlpParams& params, const Vector& x) {
  if (x.size() != spec.input_dim()) throw ShapeError("mlp_input_gradient input", spec.input_dim(), x.size());
  params.check_shapes(spec);
  return mlp_input_gradient_batch(params, x).col(0);
}

MlpVars register_params(ad::Tape& tape, const MlpParams& params) {
  MlpVars vars;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    vars.weights.push_back(tape.param(params.weights[l]));
    vars.biases.push_back(tape.param(params.biases[l]));
  }
  return vars;
}

void update_params(ad::Tape& tape, const MlpVars& vars, const MlpParams& params) {
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    tape.set_leaf(vars.weights[l], params.weights[l]);
    tape.set_leaf(vars.biases[l], params.biases[l]);
  }
}

namespace {

std::vector<ad::Var> hidden_activations(ad::Tape& tape, const MlpVars& vars, ad::Var x) {
  std::vector<ad::Var> acts;
  ad::Var prev = x;
  for (std::size_t l = 0; l + 1 < vars.weights.size(); ++l) {
    prev = tape.tanh(tape.add_bias(tape.matmul(vars.weights[l], prev), vars.biases[l]));
    acts.push_back(prev);
  }
  return acts;
}

}  // namespace

ad::Var mlp_eval(ad::Tape& tape, const MlpVars& vars, ad::Var x) {
  const auto acts = hidden_activations(tape, vars, x);
  return tape.add_bias(tape.matmul(vars.weights.back(), acts.back()), vars.biases.back());
}

ad::Var mlp_input_gradient(ad::Tape& tape, const MlpVars& vars, ad::Var x) {
  const auto acts = hidden_activations(tape, vars, x);
  const Eigen::Index batch = tape.value(x).cols();
  ad::Var g = tape.matmul_tn(vars.weights.back(), tape.constant(Matrix::Ones(1, batch)));
  for (std::size_t i = acts.size(); i-- > 0;) {
    ad::Var delta = tape.mul(g, tape.one_minus_square(acts[i]));
    g = tape.matmul_tn(vars.weights[i], delta);
  }
  return g;
}

MlpParams collect_grad(const ad::Tape& tape, const MlpVars& vars, const MlpParams& like) {
  MlpParams g = like;
  for (std::size_t l = 0; l < vars.weights.size(); ++l) {
    const Matrix& dw = tape.adjoint(vars.weights[l]);
    const Matrix& db = tape.adjoint(vars.biases[l]);
    if (dw.size() == 0)
      g.weights[l].setZero();
    else
      g.weights[l] = dw;
    if (db.size() == 0)
      g.biases[l].setZero();
    else
      g.biases[l] = db.col(0);
  }
  return g;
}

MlpParams grad_params(ad::Tape& tape, ad::Var output, const MlpVars& vars) {
  tape.backward(output);
  MlpParams like;
  for (std::size_t l = 0; l < vars.weights.size(); ++l) {
    like.weights.push_back(Matrix::Zero(tape.value(vars.weights[l]).rows(), tape.value(vars.weights[l]).cols()));
    like.biases.push_back(Vector::Zero(tape.value(vars.biases[l]).rows()));
  }
  return collect_grad(tape, vars, like);
}

}  // namespace hamlearn
