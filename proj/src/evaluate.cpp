#include "hamlearn/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "hamlearn/datagen.hpp"
#include "hamlearn/error.hpp"
#include "hamlearn/io.hpp"

namespace hamlearn {

double fractional_error(double h_true, double h_pred) {
  if (!(std::abs(h_true) >= 1e-12)) throw ContractError("fractional energy error undefined for |H| < 1e-12");
  return std::abs((h_true - h_pred) / h_true);
}

std::vector<double> fractional_energy_error(const SystemSpec& spec, const Trajectory& pred) {
  if (pred.states.empty()) throw ContractError("empty predicted trajectory");
  const double h0 = hamiltonian(spec, pred.states.front());
  std::vector<double> eps;
  eps.reserve(pred.states.size());
  for (const auto& s : pred.states) eps.push_back(fractional_error(h0, hamiltonian(spec, s)));
  return eps;
}

Dispersion learned_energy_drift(const AsrnnModel& m, const Trajectory& pred) {
  if (pred.states.empty()) throw ContractError("empty predicted trajectory");
  Dispersion d;
  const Vector& lambda = pred.lambda.size() ? pred.lambda : Vector::Zero(m.lambda_dim()).eval();
  for (const auto& s : pred.states) d.series.push_back(learned_hamiltonian(m, s, lambda));
  const double n = static_cast<double>(d.series.size());
  const double mean = std::accumulate(d.series.begin(), d.series.end(), 0.0) / n;
  double ss = 0.0;
  for (double h : d.series) ss += (h - mean) * (h - mean);
  d.std = std::sqrt(ss / n);
  const auto [lo, hi] = std::minmax_element(d.series.begin(), d.series.end());
  d.range = *hi - *lo;
  return d;
}

namespace {

double percentile_sorted(const std::vector<double>& xs, double q) {
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return i + 1 < xs.size() ? xs[i] + frac * (xs[i + 1] - xs[i]) : xs[i];
}

}  // namespace

Percentiles summarize(std::vector<double> xs) {
  if (xs.empty()) throw ContractError("cannot summarize an empty sample");
  std::sort(xs.begin(), xs.end());
  Percentiles p;
  p.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  p.median = percentile_sorted(xs, 0.5);
  p.p25 = percentile_sorted(xs, 0.25);
  p.p75 = percentile_sorted(xs, 0.75);
  return p;
}

std::vector<ModelForces> forces_of(const std::vector<AsrnnModel>& models) {
  std::vector<ModelForces> out;
  out.reserve(models.size());
  for (const auto& m : models) out.emplace_back(m);
  return out;
}

std::vector<Predictor> predictors_of(const std::vector<ModelForces>& forces, const std::vector<AsrnnModel>& models) {
  if (forces.size() != models.size())
    throw ShapeError("predictors_of", static_cast<std::ptrdiff_t>(models.size()), static_cast<std::ptrdiff_t>(forces.size()));
  std::vector<Predictor> out;
  for (std::size_t i = 0; i < forces.size(); ++i) out.push_back({&forces[i], models[i].dt});
  return out;
}

EnergyErrorSummary energy_error_summary(const std::vector<Predictor>& members, SystemFamily family,
                                        const Vector& lambda, double energy, std::size_t n_traj,
                                        std::size_t horizon, std::uint64_t seed, double divergence_eps) {
  if (members.empty()) throw ContractError("no predictors to evaluate");
  if (n_traj == 0 || horizon == 0) throw ContractError("need at least one trajectory and one step");
  const SystemSpec spec = SystemSpec::from_lambda(family, lambda);
  const int d = spec.dim();

  PhaseBatch z0{Matrix(d, static_cast<Eigen::Index>(n_traj)), Matrix(d, static_cast<Eigen::Index>(n_traj))};
  std::vector<double> h0(n_traj);
  for (std::size_t j = 0; j < n_traj; ++j) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(j)});
    const PhaseState s = sample_initial_condition(spec, std::max(energy, default_e_max(family)), energy, rng);
    z0.q.col(static_cast<Eigen::Index>(j)) = s.q;
    z0.p.col(static_cast<Eigen::Index>(j)) = s.p;
    h0[j] = hamiltonian(spec, s);
  }

  EnergyErrorSummary out;
  out.lambda = lambda;
  out.horizon = horizon;
  for (const auto& member : members) {
    const auto traj = rollout_batch(*member.forces, z0, lambda, member.dt, horizon);
    for (std::size_t j = 0; j < n_traj; ++j) {
      ++out.n_trajectories;
      const auto c = static_cast<Eigen::Index>(j);
      double sum = 0.0;
      bool diverged = false;
      for (std::size_t n = 1; n <= horizon && !diverged; ++n) {
        const PhaseState s{traj[n].q.col(c), traj[n].p.col(c)};
        if (!s.q.allFinite() || !s.p.allFinite()) {
          diverged = true;
          break;
        }
        const double e = fractional_error(h0[j], hamiltonian(spec, s));
        if (!(e <= divergence_eps)) diverged = true;
        sum += e;
      }
      if (diverged) {
        ++out.n_diverged;
      } else {
        out.trajectory_eps.push_back(sum / static_cast<double>(horizon));
      }
    }
  }
  if (!out.trajectory_eps.empty()) {
    std::vector<double> pct(out.trajectory_eps);
    for (double& x : pct) x *= 100.0;
    out.percent = summarize(std::move(pct));
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.percent = {nan, nan, nan, nan};
  }
  return out;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return xs;
}

std::vector<Vector> lambda_grid(const std::vector<double>& axis0, const std::vector<double>& axis1) {
  std::vector<Vector> grid;
  for (double a : axis0)
    for (double b : axis1) grid.push_back((Vector(2) << a, b).finished());
  return grid;
}

SweepGrid parameter_sweep(const std::vector<Predictor>& members, SystemFamily family,
                          const std::vector<Vector>& grid, const std::vector<Vector>& training_lambdas,
                          double energy, std::size_t n_traj, std::size_t horizon, std::uint64_t seed) {
  if (grid.empty()) throw ContractError("parameter sweep needs a non-empty grid");
  SweepGrid out;
  out.family = family;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const EnergyErrorSummary s =
        energy_error_summary(members, family, grid[i], energy, n_traj, horizon, derive_seed(seed, {i}));
    SweepCell cell;
    cell.lambda = grid[i];
    cell.n_total = s.n_trajectories;
    cell.n_diverged = s.n_diverged;
    cell.mean_pct_err = s.percent.mean;
    cell.training = std::any_of(training_lambdas.begin(), training_lambdas.end(), [&](const Vector& t) {
      return t.size() == grid[i].size() && (t - grid[i]).cwiseAbs().maxCoeff() < 1e-9;
    });
    out.cells.push_back(std::move(cell));
  }
  return out;
}

std::string sweep_csv(const SweepGrid& g) {
  std::ostringstream out;
  const bool two = family_lambda_dim(g.family) == 2;
  out << (two ? "alpha,beta" : "alpha") << ",mean_pct_err,n_diverged\n";
  for (const auto& c : g.cells) {
    out << format_double(c.lambda(0));
    if (two) out << ',' << format_double(c.lambda(1));
    out << ',' << format_double(c.mean_pct_err) << ',' << c.n_diverged << '\n';
  }
  return out.str();
}

std::string noise_sweep_summary(const std::vector<NoiseCondition>& conditions) {
  std::ostringstream out;
  out << "nsr,tau,median,p25,p75\n";
  for (const auto& c : conditions) {
    out << format_double(c.nsr) << ',' << format_double(c.tau) << ',' << format_double(c.summary.percent.median)
        << ',' << format_double(c.summary.percent.p25) << ',' << format_double(c.summary.percent.p75) << '\n';
  }
  return out.str();
}

OffsetAlignment align_offset(const std::vector<double>& learned, const std::vector<double>& reference) {
  if (learned.size() != reference.size())
    throw ShapeError("align_offset", static_cast<std::ptrdiff_t>(reference.size()),
                     static_cast<std::ptrdiff_t>(learned.size()));
  if (learned.empty()) throw ContractError("align_offset needs at least one point");
  OffsetAlignment a;
  double sum = 0.0;
  for (std::size_t i = 0; i < learned.size(); ++i) sum += reference[i] - learned[i];
  a.offset = sum / static_cast<double>(learned.size());
  for (std::size_t i = 0; i < learned.size(); ++i) {
    a.residuals.push_back(learned[i] + a.offset - reference[i]);
    a.max_abs_residual = std::max(a.max_abs_residual, std::abs(a.residuals.back()));
  }
  return a;
}

std::size_t count_local_minima(const std::vector<double>& v) {
  std::size_t n = 0;
  for (std::size_t i = 1; i + 1 < v.size(); ++i)
    if (v[i] < v[i - 1] && v[i] < v[i + 1]) ++n;
  return n;
}

std::vector<DoubleWellReport> double_well_diagnostic(const std::vector<AsrnnModel>& members,
                                                     const std::vector<double>& alphas,
                                                     const std::vector<double>& q_grid) {
  if (q_grid.empty()) throw ContractError("double-well diagnostic needs a q grid");
  std::vector<Vector> qs;
  for (double q : q_grid) qs.push_back(Vector::Constant(1, q));
  std::vector<DoubleWellReport> out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].dim() != 1 || members[i].lambda_dim() != 1)
      throw ShapeError("double-well model dimension", 1, members[i].dim());
    for (double alpha : alphas) {
      const SystemSpec spec{DoubleWell{alpha}};
      const Vector lam = Vector::Constant(1, alpha);
      DoubleWellReport r;
      r.member = i;
      r.alpha = alpha;
      for (const auto& q : qs) r.analytic.push_back(potential(spec, q));
      const auto learned = learned_potential_curve(members[i], qs, lam);
      const OffsetAlignment a = align_offset(learned, r.analytic);
      for (double v : learned) r.learned.push_back(v + a.offset);
      r.max_abs_residual = a.max_abs_residual;
      r.learned_minima = count_local_minima(r.learned);
      r.analytic_minima = count_local_minima(r.analytic);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::string double_well_csv(const std::vector<DoubleWellReport>& reports) {
  std::ostringstream out;
  out << "member,alpha,max_abs_residual,learned_minima,analytic_minima\n";
  for (const auto& r : reports)
    out << r.member << ',' << format_double(r.alpha) << ',' << format_double(r.max_abs_residual) << ','
        << r.learned_minima << ',' << r.analytic_minima << '\n';
  return out.str();
}

}  // namespace hamlearn
