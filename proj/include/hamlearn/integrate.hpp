#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "hamlearn/systems.hpp"

namespace hamlearn {

using Matrix = Eigen::MatrixXd;

// Source of ∂V/∂q and ∂K/∂p for a separable Hamiltonian. Arguments hold one
// state per column.
class ForceProvider {
 public:
  virtual ~ForceProvider() = default;
  virtual int dim() const = 0;
  virtual Matrix dVdq(const Matrix& q, const Vector& lambda) const = 0;
  virtual Matrix dKdp(const Matrix& p) const = 0;
};

// Exact gradients of one of the study systems; the family is fixed, the
// parameter values come from the `lambda` argument.
class AnalyticForces final : public ForceProvider {
 public:
  explicit AnalyticForces(SystemFamily family) : family_(family) {}
  int dim() const override { return family_dim(family_); }
  Matrix dVdq(const Matrix& q, const Vector& lambda) const override;
  Matrix dKdp(const Matrix& p) const override { return p; }

 private:
  SystemFamily family_;
};

struct Trajectory {
  std::vector<PhaseState> states;
  double dt = 0.0;
  Vector lambda;
  double t0 = 0.0;
};

// Several states advanced together, one per column.
struct PhaseBatch {
  Matrix q;
  Matrix p;
};

// Kick–drift–kick Störmer–Verlet step. Throws BlowupError(step_index) on a
// non-finite result.
PhaseState verlet_step(const ForceProvider& f, const PhaseState& s, const Vector& lambda, double dt,
                       std::size_t step_index = 0);

// n+1 states starting at s0.
Trajectory rollout(const ForceProvider& f, const PhaseState& s0, const Vector& lambda, double dt, std::size_t n);

// Batched rollout; returns n+1 batches. Never throws on blowup: diverging
// columns turn non-finite and callers inspect them.
std::vector<PhaseBatch> rollout_batch(const ForceProvider& f, const PhaseBatch& s0, const Vector& lambda,
                                      double dt, std::size_t n);

// Integrates n_obs * r fine steps of the analytic system, r = obs_dt/fine_dt,
// and keeps every r-th state.
Trajectory fine_then_coarsen(const SystemSpec& spec, const PhaseState& s0, double fine_dt, double obs_dt,
                             std::size_t n_obs);

// Integer ratio obs_dt/fine_dt, or ConfigError.
std::size_t coarsening_ratio(double fine_dt, double obs_dt);

// CSV with header t,q1..qd,p1..pd and 17 significant digits.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& in);

}  // namespace hamlearn
