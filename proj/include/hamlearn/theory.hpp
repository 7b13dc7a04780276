#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hamlearn/model.hpp"

namespace hamlearn {

// Variance of (η_{t+Δs} − η_t)/Δs for a stationary OU process:
// 2σ∞²(1 − e^{−Δs/τ})/Δs².
double fd_variance_predicted(double sigma_inf, double tau, double ds);

struct FdVarianceRow {
  double ds = 0.0;
  double empirical = 0.0;
  double predicted = 0.0;
  double stderr_ = 0.0;
  double z = 0.0;
};

std::vector<FdVarianceRow> fd_variance_check(double sigma_inf, double tau, const std::vector<double>& ds_list,
                                             std::size_t trials, std::uint64_t seed);
std::string fd_variance_csv(const std::vector<FdVarianceRow>& rows);

// Mean gradient over the columns of a batch of (noisy input, noisy target)
// pairs, both packed (q, p) per column.
using BatchGradient = std::function<Vector(const Matrix& inputs, const Matrix& targets)>;

// Single-sample ASRNN loss ‖ẑ_N(θ; input) − target‖² averaged over columns.
BatchGradient asrnn_batch_gradient(const AsrnnModel& m, const Vector& lambda, std::size_t n_steps);
// Linear map ẑ = A z with θ = vec(A) (column-major).
BatchGradient linear_map_batch_gradient(const Matrix& a);

struct TheoryNoise {
  double sigma_inf = 0.0;
  double tau = 0.1;
  double dt = 0.1;          // spacing between z₀ and z_N is N·dt
  bool noisy_input = true;  // z₀ + η₀ instead of z₀
  bool correlated = true;   // η_N | η₀ per OU; false: η_N independent
};

struct McOptions {
  std::size_t trials = 1'000'000;
  std::size_t group = 1000;  // trials per batch mean
  bool antithetic = true;    // (ξ, −ξ) pairs inside each group
};

struct McGradEstimate {
  Vector mean;
  Vector stderr_;
  Vector clean;  // noise-free gradient
  std::size_t trials = 0;
  std::size_t groups = 0;
  TheoryNoise noise;
  std::size_t n_steps = 0;
};

McGradEstimate expected_gradient_mc(const BatchGradient& grad, const Vector& z0, const Vector& z_n,
                                    std::size_t n_steps, const TheoryNoise& noise, const McOptions& opt,
                                    std::uint64_t seed);
McGradEstimate expected_gradient_mc(const AsrnnModel& m, const Vector& z0, const Vector& z_n, const Vector& lambda,
                                    std::size_t n_steps, const TheoryNoise& noise, const McOptions& opt,
                                    std::uint64_t seed);

struct BiasRow {
  double sigma = 0.0;
  double bias_norm = 0.0;
  double stderr_ = 0.0;
  double predicted = 0.0;  // C σ² with C fitted at fixed exponent 2
  double z = 0.0;
};

struct BiasScalingResult {
  std::vector<BiasRow> rows;
  double slope = 0.0;
  double intercept = 0.0;
  bool inconclusive = false;
};

BiasScalingResult bias_scaling_fit(const BatchGradient& grad, const Vector& z0, const Vector& z_n,
                                   std::size_t n_steps, double tau, double dt, const std::vector<double>& sigmas,
                                   const McOptions& opt, std::uint64_t seed);
std::string bias_scaling_csv(const BiasScalingResult& r);

// ∇_θ (∇_z · ẑ_N) at z₀ by central differences of the rollout parameter
// gradient.
Vector divergence_parameter_gradient(const AsrnnModel& m, const Vector& z0, const Vector& lambda,
                                     std::size_t n_steps, double h = 1e-5);

struct DecayRow {
  std::size_t n = 0;
  double gap_norm = 0.0;
  double gap_stderr = 0.0;
  double ratio = 0.0;  // −gap·D / (2σ²‖D‖²), ≈ a^N
  double ratio_stderr = 0.0;
  double predicted = 0.0;  // a^N
  double z = 0.0;
};

struct DecayResult {
  std::vector<DecayRow> rows;
  double fitted_rate = 0.0;    // per step
  double expected_rate = 0.0;  // Δt/τ
  double relative_error = 0.0;
  bool inconclusive = false;
};

DecayResult correlation_decay_check(const AsrnnModel& m, const Vector& z0, const Vector& z_n, const Vector& lambda,
                                   const std::vector<std::size_t>& n_list, double tau, double sigma,
                                   const McOptions& opt, std::uint64_t seed);
std::string correlation_decay_csv(const DecayResult& r);

struct AhnnRow {
  double ds = 0.0;
  double gap_norm = 0.0;
  double gap_stderr = 0.0;
  double coefficient = 0.0;  // (1 − e^{−Δs/τ})/Δs
  double predicted = 0.0;    // K · coefficient, K fitted
  double z = 0.0;
};

struct AhnnRatio {
  double ds = 0.0;  // compares Δs with 2Δs
  double empirical = 0.0;
  double stderr_ = 0.0;
  double predicted = 0.0;
  double z = 0.0;
};

struct AhnnScalingResult {
  std::vector<AhnnRow> rows;
  std::vector<AhnnRatio> ratios;
  double fitted_k = 0.0;
  bool inconclusive = false;
};

// Pairs (z_t + η_t, z_{t+Δs} + η_{t+Δs}) with the clean later state taken
// from the model's own flow (resolved with a fine step).
AhnnScalingResult ahnn_bias_scaling(const AsrnnModel& m, const Vector& z_t, const Vector& lambda,
                                    const std::vector<double>& ds_list, double tau, double sigma,
                                    const McOptions& opt, std::uint64_t seed);
std::string ahnn_scaling_csv(const AhnnScalingResult& r);

// {1,5,1} kinetic / {2,5,1} potential network on a one-dimensional system.
AsrnnModel tiny_model(double dt, std::uint64_t seed);

}  // namespace hamlearn
