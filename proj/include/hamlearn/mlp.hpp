#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "hamlearn/autodiff.hpp"

namespace hamlearn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Layer sizes of a scalar-output tanh network, input first. Hidden layers use
// tanh, the output neuron is linear.
struct MlpSpec {
  std::vector<int> layer_sizes;

  int input_dim() const { return layer_sizes.front(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  // Throws ContractError unless there is at least one hidden layer and a
  // single output.
  void validate() const;
  std::size_t parameter_count() const;

  bool operator==(const MlpSpec&) const = default;
};

// Weights are (out x in) per layer, biases are columns.
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static MlpParams zeros(const MlpSpec& spec);
  void check_shapes(const MlpSpec& spec) const;
  bool all_finite() const;
  std::size_t size() const;

  // Flat layout: for each layer the weight matrix (column-major) followed by
  // its bias.
  Vector flatten() const;
  void unflatten(const Eigen::Ref<const Vector>& flat);

  bool operator==(const MlpParams& other) const;
};

// N(0, 1/fan_in) weights, zero biases; reproducible from seed.
MlpParams init_gaussian(const MlpSpec& spec, std::uint64_t seed);

double mlp_eval(const MlpSpec& spec, const MlpParams& params, const Vector& x);
Vector mlp_input_gradient(const MlpSpec& spec, const MlpParams& params, const Vector& x);

// Batched versions, one sample per column of `x`.
Eigen::RowVectorXd mlp_eval_batch(const MlpParams& params, const Matrix& x);
Matrix mlp_input_gradient_batch(const MlpParams& params, const Matrix& x);

// Parameters registered on a tape as `param` leaves.
struct MlpVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

MlpVars register_params(ad::Tape& tape, const MlpParams& params);
// Refreshes leaf values of a previously registered network.
void update_params(ad::Tape& tape, const MlpVars& vars, const MlpParams& params);

// Output row (1 x batch).
ad::Var mlp_eval(ad::Tape& tape, const MlpVars& vars, ad::Var x);

// Input gradient (in x batch) built as an explicit gradient network: the
// hidden activations are recorded, then the closed-form tanh Jacobian chain
// g_{l-1} = W_l^T (g_l ∘ (1 - a_l²)) is unrolled on the same tape, so a
// single reverse sweep differentiates through it.
ad::Var mlp_input_gradient(ad::Tape& tape, const MlpVars& vars, ad::Var x);

// Runs the reverse sweep from `output` and returns d(output)/d(params).
// Entries the output does not depend on are zero.
MlpParams grad_params(ad::Tape& tape, ad::Var output, const MlpVars& vars);
// Collects the already-computed adjoints (backward() was called).
MlpParams collect_grad(const ad::Tape& tape, const MlpVars& vars, const MlpParams& like);

}  // namespace hamlearn
