#include "hamlearn/systems.hpp"

#include <cmath>

#include "hamlearn/error.hpp"

namespace hamlearn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_dim(const SystemSpec& spec, const Vector& v, const char* what) {
  if (v.size() != spec.dim()) throw ShapeError(what, spec.dim(), v.size());
}

}  // namespace

SystemFamily SystemSpec::family() const {
  return std::visit(overloaded{[](const HenonHeiles&) { return SystemFamily::HenonHeiles; },
                               [](const Morse&) { return SystemFamily::Morse; },
                               [](const DoubleWell&) { return SystemFamily::DoubleWell; }},
                    variant);
}

int SystemSpec::dim() const { return family_dim(family()); }

int SystemSpec::lambda_dim() const { return family_lambda_dim(family()); }

Vector SystemSpec::lambda() const {
  return std::visit(overloaded{[](const HenonHeiles& s) { return Vector{{s.alpha, s.beta}}; },
                               [](const Morse& s) { return Vector{{s.alpha}}; },
                               [](const DoubleWell& s) { return Vector{{s.alpha}}; }},
                    variant);
}

SystemSpec SystemSpec::from_lambda(SystemFamily family, const Vector& lambda) {
  if (lambda.size() != family_lambda_dim(family))
    throw ShapeError("parameter vector for " + family_name(family), family_lambda_dim(family), lambda.size());
  switch (family) {
    case SystemFamily::HenonHeiles:
      return {HenonHeiles{lambda(0), lambda(1)}};
    case SystemFamily::Morse:
      return {Morse{lambda(0)}};
    case SystemFamily::DoubleWell:
      return {DoubleWell{lambda(0)}};
  }
  throw ContractError("unknown system family");
}

std::string family_name(SystemFamily family) {
  switch (family) {
    case SystemFamily::HenonHeiles:
      return "henon_heiles";
    case SystemFamily::Morse:
      return "morse";
    case SystemFamily::DoubleWell:
      return "double_well";
  }
  return "unknown";
}

SystemFamily parse_family(const std::string& name) {
  if (name == "henon_heiles") return SystemFamily::HenonHeiles;
  if (name == "morse") return SystemFamily::Morse;
  if (name == "double_well") return SystemFamily::DoubleWell;
  throw ConfigError("unknown system '" + name + "' (expected henon_heiles, morse or double_well)");
}

int family_dim(SystemFamily family) { return family == SystemFamily::HenonHeiles ? 2 : 1; }

int family_lambda_dim(SystemFamily family) { return family == SystemFamily::HenonHeiles ? 2 : 1; }

double potential(const SystemSpec& spec, const Vector& q) {
  require_dim(spec, q, "potential q");
  return std::visit(overloaded{[&](const HenonHeiles& s) {
                                 const double q1 = q(0), q2 = q(1);
                                 return 0.5 * (q1 * q1 + q2 * q2) + s.alpha * q1 * q1 * q2 -
                                        s.beta * q2 * q2 * q2 / 3.0;
                               },
                               [&](const Morse& s) {
                                 const double e = std::exp(-s.alpha * (q(0) - 1.0));
                                 return (1.0 - e) * (1.0 - e) - 1.0;
                               },
                               [&](const DoubleWell& s) {
                                 const double x2 = q(0) * q(0);
                                 return 0.5 * s.alpha * x2 + 0.25 * x2 * x2;
                               }},
                    spec.variant);
}

double kinetic(const Vector& p) { return 0.5 * p.squaredNorm(); }

double hamiltonian(const SystemSpec& spec, const PhaseState& s) {
  require_dim(spec, s.p, "hamiltonian p");
  return kinetic(s.p) + potential(spec, s.q);
}

Vector potential_gradient(const SystemSpec& spec, const Vector& q) {
  require_dim(spec, q, "potential_gradient q");
  return std::visit(overloaded{[&](const HenonHeiles& s) {
                                 const double q1 = q(0), q2 = q(1);
                                 return Vector{{q1 + 2.0 * s.alpha * q1 * q2,
                                                q2 + s.alpha * q1 * q1 - s.beta * q2 * q2}};
                               },
                               [&](const Morse& s) {
                                 const double e = std::exp(-s.alpha * (q(0) - 1.0));
                                 return Vector{{2.0 * s.alpha * e * (1.0 - e)}};
                               },
                               [&](const DoubleWell& s) { return Vector{{s.alpha * q(0) + q(0) * q(0) * q(0)}}; }},
                    spec.variant);
}

Vector kinetic_gradient(const SystemSpec& spec, const Vector& p) {
  require_dim(spec, p, "kinetic_gradient p");
  return p;
}

PhaseState eom(const SystemSpec& spec, const PhaseState& s) {
  return PhaseState{kinetic_gradient(spec, s.p), -potential_gradient(spec, s.q)};
}

double morse_series_coefficient(int n, double alpha) {
  if (n < 0) throw ContractError("series index must be non-negative");
  double factorial = 1.0;
  for (int k = 2; k <= n; ++k) factorial *= k;
  const double sign = (n % 2 == 0) ? 1.0 : -1.0;
  return 2.0 * sign * (std::ldexp(1.0, n - 1) - 1.0) * std::pow(alpha, n) / factorial;
}

}  // namespace hamlearn
