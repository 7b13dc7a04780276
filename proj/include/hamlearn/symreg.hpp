#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hamlearn/datagen.hpp"
#include "hamlearn/model.hpp"

namespace hamlearn {

// Monomials of total degree <= `degree` in graded-lex order: by degree, then
// by decreasing exponent of the earlier variables (1, x, y, x², xy, y², …).
struct PolyLibrary {
  std::vector<std::string> vars;
  int degree = 3;
  bool include_constant = true;
  std::vector<std::vector<int>> exponents;

  static PolyLibrary make(std::vector<std::string> vars, int degree, bool include_constant = true);
  std::size_t size() const { return exponents.size(); }
  std::string term_name(std::size_t i) const;
  std::optional<std::size_t> index_of(const std::vector<int>& exps) const;
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::optional<std::size_t> constant_index() const;
};

// Rows = samples (one per column of `x`, variables as rows), cols = monomials.
Matrix build_design(const Matrix& x, const PolyLibrary& lib);
// Variables are (q, p) of each state followed by nothing else.
Matrix build_design(const std::vector<PhaseState>& states, const PolyLibrary& lib);

struct TargetFit {
  std::string name;
  Vector coef;
  double residual_rms = 0.0;
  bool min_norm_fallback = false;
  int iterations = 0;
};

struct SparseFit {
  PolyLibrary lib;
  double threshold = 0.0;
  double ridge = 0.0;
  std::vector<TargetFit> targets;
  std::map<std::string, double> params;
  std::vector<std::string> warnings;

  const TargetFit& target(const std::string& name) const;
  double coef(const std::string& target, const std::string& term) const;
  // Terms with non-zero coefficients, constant excluded when asked.
  std::vector<std::string> support(const std::string& target, bool skip_constant = false) const;
};

struct StlsqOptions {
  double threshold = 0.05;
  double ridge = 0.0;  // > 0 adds a Tikhonov term; default plain least squares
  int max_iters = 20;
  bool protect_constant = false;  // constant column never thresholded
};

SparseFit stlsq(const Matrix& design, const Matrix& targets, const std::vector<std::string>& names,
                const PolyLibrary& lib, const StlsqOptions& opt = {});

struct EomSampling {
  std::size_t n_traj = 20;
  std::size_t horizon = 200;
  std::optional<double> e_max;  // defaults to the family sampling bound
  std::uint64_t seed = 0;
};

// Regresses (dK/dp, −dV/dq) of `forces` on monomials of (q, p) along
// trajectories predicted with the same forces.
SparseFit recover_eom(const ForceProvider& forces, double dt, SystemFamily family, const Vector& lambda,
                      const EomSampling& sampling, int degree = 3, const StlsqOptions& opt = {});
SparseFit recover_eom(const AsrnnModel& m, SystemFamily family, const Vector& lambda, const EomSampling& sampling,
                      int degree = 3, const StlsqOptions& opt = {});

// Monomials each Henon–Heiles equation must use: q̇ = p, ṗ₁ = −q₁ − 2αq₁q₂,
// ṗ₂ = −q₂ − αq₁² + βq₂².
std::map<std::string, std::vector<std::string>> henon_heiles_expected_support();

struct EnergyModel {
  std::function<Eigen::RowVectorXd(const Matrix& p)> kinetic;
  std::function<Eigen::RowVectorXd(const Matrix& q)> potential;
};

EnergyModel energy_model_of(const AsrnnModel& m, const Vector& lambda);
EnergyModel energy_model_of(const SystemSpec& spec);

struct HamiltonianSampling {
  std::size_t sample_count = 2000;
  std::size_t n_traj = 40;
  std::size_t horizon = 500;
  std::optional<double> e_max;
  std::uint64_t seed = 0;
};

struct HamiltonianFits {
  SparseFit kinetic;
  SparseFit potential;
};

// States from trajectories of `forces` started at varying energies, pooled
// and shuffled; K fitted over p, V over q − q_center.
HamiltonianFits fit_hamiltonian_polys(const ForceProvider& forces, double dt, const EnergyModel& energies,
                                      SystemFamily family, const Vector& lambda,
                                      const HamiltonianSampling& sampling, int degree, const StlsqOptions& opt,
                                      double q_center = 0.0);
HamiltonianFits fit_hamiltonian_polys(const AsrnnModel& m, SystemFamily family, const Vector& lambda,
                                      const HamiltonianSampling& sampling, int degree, const StlsqOptions& opt,
                                      double q_center = 0.0);

// α̂ = √c₂ from a potential fit over q̃ = q − 1.
double extract_morse_alpha(const SparseFit& potential_fit);

nlohmann::json fit_to_json(const SparseFit& fit);
// Human-readable rendering, one equation per target.
std::string render_fit(const SparseFit& fit);

}  // namespace hamlearn
