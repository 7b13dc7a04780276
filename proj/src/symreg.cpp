#include "hamlearn/symreg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hamlearn/error.hpp"

namespace hamlearn {

namespace {

void monomials_of_degree(int nvars, int degree, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  const auto i = cur.size();
  if (static_cast<int>(i) == nvars - 1) {
    cur.push_back(degree);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int e = degree; e >= 0; --e) {
    cur.push_back(e);
    monomials_of_degree(nvars, degree - e, cur, out);
    cur.pop_back();
  }
}

}  // namespace

PolyLibrary PolyLibrary::make(std::vector<std::string> vars, int degree, bool include_constant) {
  if (vars.empty()) throw ContractError("polynomial library needs at least one variable");
  if (degree < 0) throw ContractError("polynomial degree must be >= 0");
  PolyLibrary lib;
  lib.degree = degree;
  lib.include_constant = include_constant;
  for (int g = include_constant ? 0 : 1; g <= degree; ++g) {
    std::vector<int> cur;
    monomials_of_degree(static_cast<int>(vars.size()), g, cur, lib.exponents);
  }
  lib.vars = std::move(vars);
  return lib;
}

std::string PolyLibrary::term_name(std::size_t i) const {
  const auto& e = exponents.at(i);
  std::string name;
  for (std::size_t v = 0; v < e.size(); ++v) {
    if (e[v] == 0) continue;
    if (!name.empty()) name += '*';
    name += vars[v];
    if (e[v] > 1) name += '^' + std::to_string(e[v]);
  }
  return name.empty() ? "1" : name;
}

std::optional<std::size_t> PolyLibrary::index_of(const std::vector<int>& exps) const {
  const auto it = std::find(exponents.begin(), exponents.end(), exps);
  if (it == exponents.end()) return std::nullopt;
  return static_cast<std::size_t>(it - exponents.begin());
}

std::optional<std::size_t> PolyLibrary::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < exponents.size(); ++i)
    if (term_name(i) == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> PolyLibrary::constant_index() const {
  return index_of(std::vector<int>(vars.size(), 0));
}

Matrix build_design(const Matrix& x, const PolyLibrary& lib) {
  if (x.rows() != static_cast<Eigen::Index>(lib.vars.size()))
    throw ShapeError("design variables", static_cast<std::ptrdiff_t>(lib.vars.size()), x.rows());
  Matrix design(x.cols(), static_cast<Eigen::Index>(lib.size()));
  for (std::size_t j = 0; j < lib.size(); ++j) {
    Eigen::ArrayXd col = Eigen::ArrayXd::Ones(x.cols());
    for (std::size_t v = 0; v < lib.vars.size(); ++v)
      for (int k = 0; k < lib.exponents[j][v]; ++k) col *= x.row(static_cast<Eigen::Index>(v)).transpose().array();
    design.col(static_cast<Eigen::Index>(j)) = col.matrix();
  }
  return design;
}

Matrix build_design(const std::vector<PhaseState>& states, const PolyLibrary& lib) {
  if (states.empty()) return Matrix(0, static_cast<Eigen::Index>(lib.size()));
  const Eigen::Index d = states.front().dim();
  Matrix x(2 * d, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].dim() != d) throw ShapeError("design state", d, states[i].dim());
    x.col(static_cast<Eigen::Index>(i)) << states[i].q, states[i].p;
  }
  return build_design(x, lib);
}

const TargetFit& SparseFit::target(const std::string& name) const {
  for (const auto& t : targets)
    if (t.name == name) return t;
  throw ContractError("no fitted target named " + name);
}

double SparseFit::coef(const std::string& target_name, const std::string& term) const {
  const auto idx = lib.index_of(term);
  if (!idx) throw ContractError("term " + term + " is not in the library");
  return target(target_name).coef(static_cast<Eigen::Index>(*idx));
}

std::vector<std::string> SparseFit::support(const std::string& target_name, bool skip_constant) const {
  const TargetFit& t = target(target_name);
  const auto c = lib.constant_index();
  std::vector<std::string> out;
  for (std::size_t i = 0; i < lib.size(); ++i) {
    if (skip_constant && c && *c == i) continue;
    if (t.coef(static_cast<Eigen::Index>(i)) != 0.0) out.push_back(lib.term_name(i));
  }
  return out;
}

namespace {

// Ridge least squares restricted to `active`, via QR of the augmented system.
Vector solve_support(const Matrix& a, const Vector& y, const std::vector<bool>& active, double ridge,
                     bool& min_norm) {
  std::vector<Eigen::Index> cols;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (active[i]) cols.push_back(static_cast<Eigen::Index>(i));
  Vector full = Vector::Zero(a.cols());
  if (cols.empty()) return full;
  const auto k = static_cast<Eigen::Index>(cols.size());
  Matrix as(a.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) as.col(j) = a.col(cols[static_cast<std::size_t>(j)]);

  Vector c;
  Eigen::ColPivHouseholderQR<Matrix> qr(as);
  if (qr.rank() < k) {
    min_norm = true;
    c = Eigen::CompleteOrthogonalDecomposition<Matrix>(as).solve(y);
  } else if (ridge > 0.0) {
    Matrix aug(as.rows() + k, k);
    aug << as, std::sqrt(ridge) * Matrix::Identity(k, k);
    Vector rhs = Vector::Zero(as.rows() + k);
    rhs.head(as.rows()) = y;
    c = aug.colPivHouseholderQr().solve(rhs);
  } else {
    c = qr.solve(y);
  }
  for (Eigen::Index j = 0; j < k; ++j) full(cols[static_cast<std::size_t>(j)]) = c(j);
  return full;
}

}  // namespace

SparseFit stlsq(const Matrix& design, const Matrix& targets, const std::vector<std::string>& names,
                const PolyLibrary& lib, const StlsqOptions& opt) {
  if (design.rows() != targets.rows()) throw ShapeError("stlsq rows", design.rows(), targets.rows());
  if (design.cols() != static_cast<Eigen::Index>(lib.size()))
    throw ShapeError("stlsq library columns", static_cast<std::ptrdiff_t>(lib.size()), design.cols());
  if (static_cast<Eigen::Index>(names.size()) != targets.cols())
    throw ShapeError("stlsq target names", targets.cols(), static_cast<std::ptrdiff_t>(names.size()));
  if (!(opt.threshold >= 0.0)) throw ContractError("stlsq threshold must be >= 0");
  if (!(opt.ridge >= 0.0)) throw ContractError("stlsq ridge must be >= 0");
  if (opt.max_iters < 1) throw ContractError("stlsq max_iters must be >= 1");
  if (design.rows() == 0) throw DegenerateDataError("stlsq needs at least one sample");

  SparseFit fit;
  fit.lib = lib;
  fit.threshold = opt.threshold;
  fit.ridge = opt.ridge;
  const auto constant = lib.constant_index();
  for (Eigen::Index t = 0; t < targets.cols(); ++t) {
    TargetFit tf;
    tf.name = names[static_cast<std::size_t>(t)];
    const Vector y = targets.col(t);
    std::vector<bool> active(lib.size(), true);
    Vector c;
    bool stable = false;
    for (tf.iterations = 1; tf.iterations <= opt.max_iters; ++tf.iterations) {
      c = solve_support(design, y, active, opt.ridge, tf.min_norm_fallback);
      bool changed = false;
      for (std::size_t i = 0; i < active.size(); ++i) {
        if (!active[i] || (opt.protect_constant && constant && *constant == i)) continue;
        if (std::abs(c(static_cast<Eigen::Index>(i))) < opt.threshold) {
          active[i] = false;
          changed = true;
        }
      }
      if (!changed) {
        stable = true;
        break;
      }
    }
    if (!stable) {
      tf.iterations = opt.max_iters;
      c = solve_support(design, y, active, opt.ridge, tf.min_norm_fallback);
      for (std::size_t i = 0; i < active.size(); ++i) {
        if (opt.protect_constant && constant && *constant == i) continue;
        if (std::abs(c(static_cast<Eigen::Index>(i))) < opt.threshold) c(static_cast<Eigen::Index>(i)) = 0.0;
      }
      fit.warnings.push_back(tf.name + ": support did not stabilize within max_iters");
    }
    tf.residual_rms = std::sqrt((design * c - y).squaredNorm() / static_cast<double>(design.rows()));
    if (tf.min_norm_fallback) fit.warnings.push_back(tf.name + ": rank-deficient support, minimum-norm solution");
    tf.coef = std::move(c);
    fit.targets.push_back(std::move(tf));
  }
  return fit;
}

namespace {

std::vector<std::string> coordinate_names(int d) {
  if (d == 1) return {"q", "p"};
  std::vector<std::string> names;
  for (int i = 1; i <= d; ++i) names.push_back("q" + std::to_string(i));
  for (int i = 1; i <= d; ++i) names.push_back("p" + std::to_string(i));
  return names;
}

// Trajectory states, rows (q, p), one column per state; diverged
// trajectories are dropped.
Matrix sample_trajectory_states(const ForceProvider& forces, double dt, SystemFamily family, const Vector& lambda,
                                std::size_t n_traj, std::size_t horizon, std::optional<double> e_max,
                                std::uint64_t seed) {
  const SystemSpec spec = SystemSpec::from_lambda(family, lambda);
  const int d = spec.dim();
  const double bound = e_max.value_or(default_e_max(family));
  PhaseBatch z0{Matrix(d, static_cast<Eigen::Index>(n_traj)), Matrix(d, static_cast<Eigen::Index>(n_traj))};
  for (std::size_t j = 0; j < n_traj; ++j) {
    Rng rng = make_rng(seed, {0x4943, static_cast<std::uint64_t>(j)});
    const PhaseState s = sample_initial_condition(spec, bound, std::nullopt, rng);
    z0.q.col(static_cast<Eigen::Index>(j)) = s.q;
    z0.p.col(static_cast<Eigen::Index>(j)) = s.p;
  }
  const auto traj = rollout_batch(forces, z0, lambda, dt, horizon);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n_traj); ++j) {
    bool ok = true;
    for (const auto& b : traj) ok = ok && b.q.col(j).allFinite() && b.p.col(j).allFinite();
    if (ok) keep.push_back(j);
  }
  if (keep.empty()) throw DegenerateDataError("every sampled trajectory diverged");
  Matrix states(2 * d, static_cast<Eigen::Index>(keep.size() * traj.size()));
  Eigen::Index col = 0;
  for (Eigen::Index j : keep)
    for (const auto& b : traj) {
      states.col(col).head(d) = b.q.col(j);
      states.col(col).tail(d) = b.p.col(j);
      ++col;
    }
  return states;
}

}  // namespace

std::map<std::string, std::vector<std::string>> henon_heiles_expected_support() {
  return {{"dq1", {"p1"}}, {"dq2", {"p2"}}, {"dp1", {"q1", "q1*q2"}}, {"dp2", {"q1^2", "q2", "q2^2"}}};
}

SparseFit recover_eom(const ForceProvider& forces, double dt, SystemFamily family, const Vector& lambda,
                      const EomSampling& sampling, int degree, const StlsqOptions& opt) {
  if (forces.dim() != family_dim(family)) throw ShapeError("recover_eom forces", family_dim(family), forces.dim());
  const int d = forces.dim();
  const Matrix states =
      sample_trajectory_states(forces, dt, family, lambda, sampling.n_traj, sampling.horizon, sampling.e_max, sampling.seed);
  const Matrix q = states.topRows(d);
  const Matrix p = states.bottomRows(d);
  Matrix targets(states.cols(), 2 * d);
  targets.leftCols(d) = forces.dKdp(p).transpose();
  targets.rightCols(d) = -forces.dVdq(q, lambda).transpose();

  const auto vars = coordinate_names(d);
  std::vector<std::string> names;
  for (const auto& v : vars) names.push_back("d" + v);
  const PolyLibrary lib = PolyLibrary::make(vars, degree);
  SparseFit fit = stlsq(build_design(states, lib), targets, names, lib, opt);

  if (family == SystemFamily::HenonHeiles && degree >= 2) {
    fit.params["alpha_hat"] = -fit.coef("dp1", "q1*q2") / 2.0;
    fit.params["alpha_hat_cross"] = -fit.coef("dp2", "q1^2");
    fit.params["beta_hat"] = fit.coef("dp2", "q2^2");
    bool exact = true;
    for (const auto& [target, terms] : henon_heiles_expected_support()) {
      auto got = fit.support(target);
      auto want = terms;
      std::sort(got.begin(), got.end());
      std::sort(want.begin(), want.end());
      if (got != want) {
        exact = false;
        std::string msg = "structure mismatch in " + target + ": got {";
        for (std::size_t i = 0; i < got.size(); ++i) msg += (i ? "," : "") + got[i];
        fit.warnings.push_back(msg + "}");
      }
    }
    fit.params["support_exact"] = exact ? 1.0 : 0.0;
  }
  return fit;
}

SparseFit recover_eom(const AsrnnModel& m, SystemFamily family, const Vector& lambda, const EomSampling& sampling,
                      int degree, const StlsqOptions& opt) {
  const ModelForces forces(m);
  return recover_eom(forces, m.dt, family, lambda, sampling, degree, opt);
}

EnergyModel energy_model_of(const AsrnnModel& m, const Vector& lambda) {
  if (lambda.size() != m.lambda_dim()) throw ShapeError("energy model lambda", m.lambda_dim(), lambda.size());
  return {[&m](const Matrix& p) { return Eigen::RowVectorXd(mlp_eval_batch(m.k_params, p)); },
          [&m, lambda](const Matrix& q) {
            Matrix x(q.rows() + lambda.size(), q.cols());
            x << q, lambda.replicate(1, q.cols());
            return Eigen::RowVectorXd(mlp_eval_batch(m.v_params, x));
          }};
}

EnergyModel energy_model_of(const SystemSpec& spec) {
  return {[](const Matrix& p) {
            Eigen::RowVectorXd k(p.cols());
            for (Eigen::Index j = 0; j < p.cols(); ++j) k(j) = kinetic(p.col(j));
            return k;
          },
          [spec](const Matrix& q) {
            Eigen::RowVectorXd v(q.cols());
            for (Eigen::Index j = 0; j < q.cols(); ++j) v(j) = potential(spec, q.col(j));
            return v;
          }};
}

HamiltonianFits fit_hamiltonian_polys(const ForceProvider& forces, double dt, const EnergyModel& energies,
                                      SystemFamily family, const Vector& lambda,
                                      const HamiltonianSampling& sampling, int degree, const StlsqOptions& opt,
                                      double q_center) {
  if (degree < 2) throw ContractError("hamiltonian polynomial fits need degree >= 2");
  if (sampling.sample_count == 0) throw ContractError("sample_count must be positive");
  const int d = forces.dim();
  const Matrix states =
      sample_trajectory_states(forces, dt, family, lambda, sampling.n_traj, sampling.horizon, sampling.e_max, sampling.seed);

  // Time-shuffle, then keep the first sample_count states.
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(states.cols()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
  Rng rng = make_rng(sampling.seed, {0x53485546});
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
  const std::size_t n = std::min(sampling.sample_count, idx.size());
  Matrix q(d, static_cast<Eigen::Index>(n)), p(d, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    q.col(static_cast<Eigen::Index>(i)) = states.col(idx[i]).head(d);
    p.col(static_cast<Eigen::Index>(i)) = states.col(idx[i]).tail(d);
  }

  const auto names = coordinate_names(d);
  std::vector<std::string> qvars(names.begin(), names.begin() + d);
  std::vector<std::string> pvars(names.begin() + d, names.end());
  if (q_center != 0.0)
    for (auto& v : qvars) v += "t";  // shifted coordinate q̃ = q − center

  StlsqOptions o = opt;
  o.protect_constant = true;
  HamiltonianFits fits;
  const PolyLibrary klib = PolyLibrary::make(pvars, degree);
  fits.kinetic = stlsq(build_design(p, klib), energies.kinetic(p).transpose(), {"K"}, klib, o);
  const PolyLibrary vlib = PolyLibrary::make(qvars, degree);
  const Matrix shifted = q.array() - q_center;
  fits.potential = stlsq(build_design(shifted, vlib), energies.potential(q).transpose(), {"V"}, vlib, o);
  fits.potential.params["q_center"] = q_center;
  return fits;
}

HamiltonianFits fit_hamiltonian_polys(const AsrnnModel& m, SystemFamily family, const Vector& lambda,
                                      const HamiltonianSampling& sampling, int degree, const StlsqOptions& opt,
                                      double q_center) {
  const ModelForces forces(m);
  return fit_hamiltonian_polys(forces, m.dt, energy_model_of(m, lambda), family, lambda, sampling, degree, opt,
                               q_center);
}

double extract_morse_alpha(const SparseFit& fit) {
  if (fit.lib.vars.size() != 1) throw ContractError("morse alpha extraction needs a one-variable potential fit");
  const auto idx = fit.lib.index_of(std::vector<int>{2});
  if (!idx) throw ContractError("potential fit has no quadratic term");
  const double c2 = fit.targets.at(0).coef(static_cast<Eigen::Index>(*idx));
  if (c2 < 0.0) throw Error("quadratic coefficient is negative (" + std::to_string(c2) + "); fit failed");
  return std::sqrt(c2);
}

nlohmann::json fit_to_json(const SparseFit& fit) {
  nlohmann::json j;
  nlohmann::json terms = nlohmann::json::array();
  for (std::size_t i = 0; i < fit.lib.size(); ++i) terms.push_back(fit.lib.term_name(i));
  j["library"] = {{"vars", fit.lib.vars}, {"degree", fit.lib.degree}, {"include_constant", fit.lib.include_constant},
                  {"terms", terms}};
  j["threshold"] = fit.threshold;
  j["ridge"] = fit.ridge;
  j["targets"] = nlohmann::json::object();
  for (const auto& t : fit.targets) {
    nlohmann::json coefs = nlohmann::json::object();
    for (std::size_t i = 0; i < fit.lib.size(); ++i) {
      const double c = t.coef(static_cast<Eigen::Index>(i));
      if (c != 0.0) coefs[fit.lib.term_name(i)] = c;
    }
    j["targets"][t.name] = {{"coefficients", coefs},
                            {"residual_rms", t.residual_rms},
                            {"min_norm_fallback", t.min_norm_fallback},
                            {"iterations", t.iterations}};
  }
  j["params"] = fit.params;
  j["warnings"] = fit.warnings;
  return j;
}

std::string render_fit(const SparseFit& fit) {
  std::ostringstream out;
  char buf[64];
  for (const auto& t : fit.targets) {
    out << t.name << " =";
    bool any = false;
    for (std::size_t i = 0; i < fit.lib.size(); ++i) {
      const double c = t.coef(static_cast<Eigen::Index>(i));
      if (c == 0.0) continue;
      std::snprintf(buf, sizeof buf, " %s %.6g", c < 0 ? "-" : (any ? "+" : ""), std::abs(c));
      out << buf;
      const std::string term = fit.lib.term_name(i);
      if (term != "1") out << ' ' << term;
      any = true;
    }
    if (!any) out << " 0";
    out << '\n';
  }
  return out.str();
}

}  // namespace hamlearn
