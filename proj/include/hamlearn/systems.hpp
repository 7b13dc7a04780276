#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>

namespace hamlearn {

using Vector = Eigen::VectorXd;

// Canonical coordinates of a system at one instant.
struct PhaseState {
  Vector q;
  Vector p;

  Eigen::Index dim() const { return q.size(); }
  bool operator==(const PhaseState& o) const { return q == o.q && p == o.p; }
};

// V = (q1²+q2²)/2 + α q1² q2 − β q2³/3
struct HenonHeiles {
  double alpha = 1.0;
  double beta = 1.0;
};

// V = (1 − e^{−α(q−1)})² − 1
struct Morse {
  double alpha = 1.0;
};

// V = α q²/2 + q⁴/4
struct DoubleWell {
  double alpha = 1.0;
};

enum class SystemFamily { HenonHeiles, Morse, DoubleWell };

// Every system has K = |p|²/2.
struct SystemSpec {
  std::variant<HenonHeiles, Morse, DoubleWell> variant;

  SystemFamily family() const;
  int dim() const;
  int lambda_dim() const;
  Vector lambda() const;

  static SystemSpec from_lambda(SystemFamily family, const Vector& lambda);
};

std::string family_name(SystemFamily family);
SystemFamily parse_family(const std::string& name);
int family_dim(SystemFamily family);
int family_lambda_dim(SystemFamily family);

double potential(const SystemSpec& spec, const Vector& q);
double kinetic(const Vector& p);
double hamiltonian(const SystemSpec& spec, const PhaseState& s);
Vector potential_gradient(const SystemSpec& spec, const Vector& q);
Vector kinetic_gradient(const SystemSpec& spec, const Vector& p);
// Time derivative (q̇, ṗ) packed as a PhaseState.
PhaseState eom(const SystemSpec& spec, const PhaseState& s);

// Coefficient c_n of the Morse potential expanded about q = 1:
// c_n = 2(−1)ⁿ(2^{n−1} − 1)αⁿ/n!.
double morse_series_coefficient(int n, double alpha);

}  // namespace hamlearn
