#include "hamlearn/integrate.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "hamlearn/error.hpp"
#include "hamlearn/io.hpp"

namespace hamlearn {

Matrix AnalyticForces::dVdq(const Matrix& q, const Vector& lambda) const {
  if (q.rows() != dim()) throw ShapeError("dVdq q", dim(), q.rows());
  if (lambda.size() != family_lambda_dim(family_))
    throw ShapeError("dVdq lambda", family_lambda_dim(family_), lambda.size());
  Matrix g(q.rows(), q.cols());
  switch (family_) {
    case SystemFamily::HenonHeiles: {
      const double a = lambda(0), b = lambda(1);
      const auto q1 = q.row(0).array();
      const auto q2 = q.row(1).array();
      g.row(0) = (q1 + 2.0 * a * q1 * q2).matrix();
      g.row(1) = (q2 + a * q1.square() - b * q2.square()).matrix();
      break;
    }
    case SystemFamily::Morse: {
      const double a = lambda(0);
      const Eigen::ArrayXXd e = (-a * (q.array() - 1.0)).exp();
      g = (2.0 * a * e * (1.0 - e)).matrix();
      break;
    }
    case SystemFamily::DoubleWell: {
      const double a = lambda(0);
      g = (a * q.array() + q.array().cube()).matrix();
      break;
    }
  }
  return g;
}

namespace {

void check_state(const ForceProvider& f, const Matrix& q, const Matrix& p) {
  if (q.rows() != f.dim()) throw ShapeError("state q", f.dim(), q.rows());
  if (p.rows() != f.dim()) throw ShapeError("state p", f.dim(), p.rows());
  if (q.cols() != p.cols()) throw ShapeError("state batch", q.cols(), p.cols());
}

// One step given the force at the current position; returns the force at the
// new position in `force` so consecutive steps reuse it.
void kick_drift_kick(const ForceProvider& f, Matrix& q, Matrix& p, Matrix& force, const Vector& lambda,
                     double dt) {
  p -= (0.5 * dt) * force;
  q += dt * f.dKdp(p);
  force = f.dVdq(q, lambda);
  p -= (0.5 * dt) * force;
}

}  // namespace

PhaseState verlet_step(const ForceProvider& f, const PhaseState& s, const Vector& lambda, double dt,
                       std::size_t step_index) {
  if (!(dt != 0.0) || !std::isfinite(dt)) throw ContractError("verlet_step requires a finite non-zero dt");
  check_state(f, s.q, s.p);
  Matrix q = s.q;
  Matrix p = s.p;
  Matrix force = f.dVdq(q, lambda);
  kick_drift_kick(f, q, p, force, lambda, dt);
  if (!q.allFinite() || !p.allFinite()) throw BlowupError(step_index);
  return PhaseState{q.col(0), p.col(0)};
}

Trajectory rollout(const ForceProvider& f, const PhaseState& s0, const Vector& lambda, double dt, std::size_t n) {
  check_state(f, s0.q, s0.p);
  Trajectory traj;
  traj.dt = dt;
  traj.lambda = lambda;
  traj.states.reserve(n + 1);
  traj.states.push_back(s0);
  if (n == 0) return traj;
  Matrix q = s0.q;
  Matrix p = s0.p;
  Matrix force = f.dVdq(q, lambda);
  for (std::size_t i = 0; i < n; ++i) {
    kick_drift_kick(f, q, p, force, lambda, dt);
    if (!q.allFinite() || !p.allFinite()) throw BlowupError(i);
    traj.states.push_back(PhaseState{q.col(0), p.col(0)});
  }
  return traj;
}

std::vector<PhaseBatch> rollout_batch(const ForceProvider& f, const PhaseBatch& s0, const Vector& lambda,
                                      double dt, std::size_t n) {
  check_state(f, s0.q, s0.p);
  std::vector<PhaseBatch> out;
  out.reserve(n + 1);
  out.push_back(s0);
  Matrix q = s0.q;
  Matrix p = s0.p;
  Matrix force = f.dVdq(q, lambda);
  for (std::size_t i = 0; i < n; ++i) {
    kick_drift_kick(f, q, p, force, lambda, dt);
    out.push_back(PhaseBatch{q, p});
  }
  return out;
}

std::size_t coarsening_ratio(double fine_dt, double obs_dt) {
  if (!(fine_dt > 0.0) || !(obs_dt > 0.0)) throw ConfigError("time steps must be positive");
  const double ratio = obs_dt / fine_dt;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded)
    throw ConfigError("obs_dt/fine_dt must be a positive integer, got " + std::to_string(ratio));
  return static_cast<std::size_t>(rounded);
}

Trajectory fine_then_coarsen(const SystemSpec& spec, const PhaseState& s0, double fine_dt, double obs_dt,
                             std::size_t n_obs) {
  const std::size_t r = coarsening_ratio(fine_dt, obs_dt);
  const AnalyticForces forces(spec.family());
  const Vector lambda = spec.lambda();
  check_state(forces, s0.q, s0.p);

  Trajectory traj;
  traj.dt = obs_dt;
  traj.lambda = lambda;
  traj.states.reserve(n_obs + 1);
  traj.states.push_back(s0);
  Matrix q = s0.q;
  Matrix p = s0.p;
  Matrix force = forces.dVdq(q, lambda);
  std::size_t step = 0;
  for (std::size_t i = 0; i < n_obs; ++i) {
    for (std::size_t j = 0; j < r; ++j, ++step) {
      kick_drift_kick(forces, q, p, force, lambda, fine_dt);
      if (!q.allFinite() || !p.allFinite()) throw BlowupError(step);
    }
    traj.states.push_back(PhaseState{q.col(0), p.col(0)});
  }
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  if (traj.states.empty()) throw ContractError("cannot write an empty trajectory");
  const Eigen::Index d = traj.states.front().dim();
  out << "t";
  for (Eigen::Index i = 0; i < d; ++i) out << ",q" << (i + 1);
  for (Eigen::Index i = 0; i < d; ++i) out << ",p" << (i + 1);
  out << '\n';
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    const auto& s = traj.states[n];
    out << format_double(traj.t0 + static_cast<double>(n) * traj.dt);
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_double(s.q(i));
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_double(s.p(i));
    out << '\n';
  }
}

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("trajectory CSV is empty");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "t" || header.size() % 2 != 1)
    throw IoError("trajectory CSV header must be t,q1..qd,p1..pd");
  const Eigen::Index d = static_cast<Eigen::Index>((header.size() - 1) / 2);
  Trajectory traj;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) throw IoError("trajectory CSV row has wrong field count");
    times.push_back(parse_double(fields[0]));
    PhaseState s{Vector(d), Vector(d)};
    for (Eigen::Index i = 0; i < d; ++i) {
      s.q(i) = parse_double(fields[static_cast<std::size_t>(1 + i)]);
      s.p(i) = parse_double(fields[static_cast<std::size_t>(1 + d + i)]);
    }
    traj.states.push_back(std::move(s));
  }
  if (traj.states.empty()) throw IoError("trajectory CSV has no rows");
  traj.t0 = times.front();
  traj.dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  return traj;
}

}  // namespace hamlearn
