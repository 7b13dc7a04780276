#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hamlearn/datagen.hpp"
#include "hamlearn/integrate.hpp"
#include "hamlearn/mlp.hpp"

namespace hamlearn {

// H_θ(q, p; λ) = K_θ1(p) + V_θ2(q; λ). The potential network sees q followed
// by the parameter channels λ; the kinetic network sees p only.
struct AsrnnModel {
  MlpSpec k_spec;
  MlpParams k_params;
  MlpSpec v_spec;
  MlpParams v_params;
  double dt = 0.1;

  int dim() const { return k_spec.input_dim(); }
  int lambda_dim() const { return v_spec.input_dim() - k_spec.input_dim(); }
  void validate() const;

  // Both networks in one flat vector (kinetic first).
  Vector flatten() const;
  void unflatten(const Eigen::Ref<const Vector>& flat);
  std::size_t parameter_count() const { return k_params.size() + v_params.size(); }

  static AsrnnModel zeros(MlpSpec k_spec, MlpSpec v_spec, double dt);
  static AsrnnModel init(MlpSpec k_spec, MlpSpec v_spec, double dt, std::uint64_t seed);
};

using PredictedTrajectory = Trajectory;

class ModelForces final : public ForceProvider {
 public:
  explicit ModelForces(const AsrnnModel& m) : m_(m) {}
  int dim() const override { return m_.dim(); }
  // Gradient of V_θ2 with respect to q only; the λ channels are dropped.
  Matrix dVdq(const Matrix& q, const Vector& lambda) const override;
  Matrix dKdp(const Matrix& p) const override;

 private:
  const AsrnnModel& m_;
};

PredictedTrajectory predict(const AsrnnModel& m, const PhaseState& z0, const Vector& lambda, std::size_t n);
std::vector<PhaseBatch> predict_batch(const AsrnnModel& m, const PhaseBatch& z0, const Vector& lambda,
                                      std::size_t n);

// K_θ1(p) + V_θ2(q; λ).
double learned_hamiltonian(const AsrnnModel& m, const PhaseState& s, const Vector& lambda);
Eigen::RowVectorXd learned_hamiltonian_batch(const AsrnnModel& m, const PhaseBatch& s, const Vector& lambda);
std::vector<double> learned_potential_curve(const AsrnnModel& m, const std::vector<Vector>& q_grid,
                                            const Vector& lambda);
std::vector<double> learned_kinetic_curve(const AsrnnModel& m, const std::vector<Vector>& p_grid);

struct LossOptions {
  // Squared L2 mismatch; false gives the plain (unsquared) norms.
  bool squared = true;
  // Samples per tape; bounds memory, results do not depend on it beyond
  // floating-point summation order, which is fixed.
  std::size_t chunk = 256;
};

struct LossGradient {
  double loss = 0.0;
  MlpParams k_grad;
  MlpParams v_grad;

  Vector flatten() const;
};

// Mean over samples of ‖q_k − q_obs‖² + ‖p_k − p_obs‖², with (q_k, p_k) the
// model rolled out k steps from z0. Throws BlowupError if a rollout diverges.
double asrnn_loss(const AsrnnModel& m, const std::vector<SparseSample>& batch, const LossOptions& opt = {});
LossGradient asrnn_loss_gradient(const AsrnnModel& m, const std::vector<SparseSample>& batch,
                                 const LossOptions& opt = {});

// ∇_θ (wᵀ ẑ_N(z0)) for the N-step map, with w packed as (q, p).
LossGradient rollout_functional_gradient(const AsrnnModel& m, const PhaseState& z0, const Vector& lambda,
                                         std::size_t n, const Vector& weights);

// A pair of (noisy) observations Δs apart.
struct FdPair {
  PhaseState z_t;
  PhaseState z_next;
  Vector lambda;
};

// Mean over pairs of ‖∂K/∂p(p_t) − Δq/Δs‖² + ‖∂V/∂q(q_t) + Δp/Δs‖².
double ahnn_fd_loss(const AsrnnModel& m, const std::vector<FdPair>& pairs, double delta_s);
LossGradient ahnn_fd_loss_gradient(const AsrnnModel& m, const std::vector<FdPair>& pairs, double delta_s);

// {"layer_sizes", "weights" (row-major per layer), "biases", "seed"}.
nlohmann::json mlp_to_json(const MlpSpec& spec, const MlpParams& params, std::uint64_t seed);
std::pair<MlpSpec, MlpParams> mlp_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const AsrnnModel& m, std::uint64_t seed, const nlohmann::json& metadata = {});
AsrnnModel model_from_json(const nlohmann::json& j);

}  // namespace hamlearn
