#pragma once

#include <functional>
#include <string>

#include "hamlearn/mlp.hpp"

namespace hamlearn {

// f(x) with its gradient written to `grad`. Returning a non-finite value, or
// throwing BlowupError, marks x as infeasible (treated as +inf).
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsOptions {
  int history = 20;
  int max_line_search_evals = 25;
  double tolerance = 1e-10;  // on the max-norm of the gradient
  double c1 = 1e-4;
  double c2 = 0.9;
};

enum class LbfgsStatus { Progress, Converged, LineSearchFailed };

std::string to_string(LbfgsStatus s);

// Stateful driver so callers can interleave bookkeeping (validation,
// checkpoints, rescue steps) between iterations.
class Lbfgs {
 public:
  // Evaluates f(x0); TrainingError if it is not finite there.
  Lbfgs(Objective f, Vector x0, LbfgsOptions opt = {});

  LbfgsStatus step();
  // Drops the curvature history and restarts from x.
  void reset(Vector x);

  const Vector& x() const { return x_; }
  double f() const { return f_; }
  const Vector& grad() const { return g_; }
  int iterations() const { return iterations_; }
  int evaluations() const { return evaluations_; }

 private:
  double eval(const Vector& x, Vector& g);
  Vector direction() const;

  Objective fn_;
  LbfgsOptions opt_;
  Vector x_, g_;
  double f_ = 0.0;
  std::vector<Vector> s_, y_;
  std::vector<double> rho_;
  int iterations_ = 0;
  int evaluations_ = 0;
};

struct LbfgsResult {
  Vector x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStatus status = LbfgsStatus::Progress;  // Progress = iteration budget used up
};

LbfgsResult lbfgs_minimize(const Objective& f, Vector x0, int max_iters, const LbfgsOptions& opt = {});

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(Eigen::Index n, AdamOptions opt = {});
  void step(Vector& x, const Vector& grad);

 private:
  AdamOptions opt_;
  Vector m_, v_;
  long t_ = 0;
};

}  // namespace hamlearn
