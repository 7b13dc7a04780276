#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hamlearn/model.hpp"

namespace hamlearn {

// |H − H_pred| / |H| with H the true energy at the initial state.
double fractional_error(double h_true, double h_pred);
// Per predicted state, using the analytic Hamiltonian of `spec` (never H_θ).
std::vector<double> fractional_energy_error(const SystemSpec& spec, const Trajectory& pred);

struct Dispersion {
  std::vector<double> series;
  double std = 0.0;    // population standard deviation
  double range = 0.0;  // max − min
};

Dispersion learned_energy_drift(const AsrnnModel& m, const Trajectory& pred);

struct Percentiles {
  double mean = 0.0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
};

// Linear-interpolation percentiles; ContractError on an empty input.
Percentiles summarize(std::vector<double> xs);

// A predictor under evaluation: any force field plus its step size.
struct Predictor {
  const ForceProvider* forces;
  double dt;
};

// `forces` must outlive the predictors (keep the forces_of() result alive).
std::vector<ModelForces> forces_of(const std::vector<AsrnnModel>& models);
std::vector<Predictor> predictors_of(const std::vector<ModelForces>& forces, const std::vector<AsrnnModel>& models);

struct EnergyErrorSummary {
  Vector lambda;
  // Mean ε over the horizon, one entry per (member, trajectory) that stayed
  // bounded; fractions, not percent.
  std::vector<double> trajectory_eps;
  Percentiles percent;  // of trajectory_eps × 100
  std::size_t n_trajectories = 0;
  std::size_t n_diverged = 0;
  std::size_t horizon = 0;
};

// Predictions from initial conditions on the energy shell `energy`; shared
// across members. A trajectory counts as diverged if any state is non-finite
// or its ε exceeds `divergence_eps`.
EnergyErrorSummary energy_error_summary(const std::vector<Predictor>& members, SystemFamily family,
                                        const Vector& lambda, double energy, std::size_t n_traj,
                                        std::size_t horizon, std::uint64_t seed, double divergence_eps = 10.0);

struct SweepCell {
  Vector lambda;
  double mean_pct_err = 0.0;  // NaN when every trajectory diverged
  std::size_t n_diverged = 0;
  std::size_t n_total = 0;
  bool training = false;
};

struct SweepGrid {
  SystemFamily family = SystemFamily::HenonHeiles;
  std::vector<SweepCell> cells;
};

// Axis-aligned grid for 2-parameter families (first index slowest).
std::vector<Vector> lambda_grid(const std::vector<double>& axis0, const std::vector<double>& axis1);
std::vector<double> linspace(double lo, double hi, std::size_t n);

SweepGrid parameter_sweep(const std::vector<Predictor>& members, SystemFamily family,
                          const std::vector<Vector>& grid, const std::vector<Vector>& training_lambdas,
                          double energy, std::size_t n_traj, std::size_t horizon, std::uint64_t seed);

// alpha,beta,mean_pct_err,n_diverged (alpha only for 1-parameter families).
std::string sweep_csv(const SweepGrid& g);

struct NoiseCondition {
  double nsr = 0.0;
  double tau = 0.0;
  EnergyErrorSummary summary;
};

// nsr,tau,median,p25,p75 in percent.
std::string noise_sweep_summary(const std::vector<NoiseCondition>& conditions);

struct OffsetAlignment {
  double offset = 0.0;
  std::vector<double> residuals;
  double max_abs_residual = 0.0;
};

OffsetAlignment align_offset(const std::vector<double>& learned, const std::vector<double>& reference);

// Strict interior local minima of a sampled curve.
std::size_t count_local_minima(const std::vector<double>& values);

struct DoubleWellReport {
  std::size_t member = 0;
  double alpha = 0.0;
  std::vector<double> learned;  // aligned
  std::vector<double> analytic;
  double max_abs_residual = 0.0;
  std::size_t learned_minima = 0;
  std::size_t analytic_minima = 0;
};

std::vector<DoubleWellReport> double_well_diagnostic(const std::vector<AsrnnModel>& members,
                                                     const std::vector<double>& alphas,
                                                     const std::vector<double>& q_grid);
// member,alpha,max_abs_residual,learned_minima,analytic_minima
std::string double_well_csv(const std::vector<DoubleWellReport>& reports);

}  // namespace hamlearn
