#include <doctest.h>

#include "hamlearn/error.hpp"
#include "hamlearn/systems.hpp"

using namespace hamlearn;

namespace {
Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }
Vector v1(double a) { return Vector::Constant(1, a); }
SystemSpec hh(double a, double b) { return SystemSpec{HenonHeiles{a, b}}; }
}  // namespace

TEST_CASE("potential: hand-evaluated values") {
  CHECK(potential(hh(1, 1), v2(0, 0)) == 0.0);
  CHECK(potential(hh(0.5, 0.7), v2(1, 0)) == doctest::Approx(0.5).epsilon(1e-15));
  for (double a : {0.3, 1.0, 4.0}) CHECK(potential(SystemSpec{Morse{a}}, v1(1.0)) == -1.0);
  // α q²/2 + q⁴/4 at q=1, α=−1
  CHECK(potential(SystemSpec{DoubleWell{-1.0}}, v1(1.0)) == doctest::Approx(-0.25));
}

TEST_CASE("potential_gradient: hand-evaluated values") {
  CHECK(potential_gradient(hh(0.5, 0.7), v2(0, 0)).isZero(0.0));
  const Vector g = potential_gradient(hh(0.5, 0.7), v2(1, 1));
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(0.8));
  CHECK(potential_gradient(SystemSpec{Morse{2.0}}, v1(1.0))[0] == 0.0);
}

TEST_CASE("potential_gradient agrees with central differences") {
  const SystemSpec specs[] = {hh(0.4, 0.6), SystemSpec{Morse{1.5}}, SystemSpec{DoubleWell{-0.5}}};
  for (const auto& s : specs) {
    Vector q = Vector::Constant(s.dim(), 0.37);
    const Vector g = potential_gradient(s, q);
    for (int i = 0; i < s.dim(); ++i) {
      Vector qp = q, qm = q;
      qp[i] += 1e-6;
      qm[i] -= 1e-6;
      CHECK(g[i] == doctest::Approx((potential(s, qp) - potential(s, qm)) / 2e-6).epsilon(1e-8));
    }
  }
}

TEST_CASE("kinetic_gradient is the identity") {
  CHECK(kinetic_gradient(hh(1, 1), v2(0, 0)).isZero(0.0));
  CHECK(kinetic_gradient(hh(1, 1), v2(0.3, -0.1)) == v2(0.3, -0.1));
  CHECK(kinetic_gradient(SystemSpec{Morse{1}}, v1(2.0))[0] == 2.0);
  CHECK(kinetic(v2(0.3, 0.4)) == doctest::Approx(0.125));
}

TEST_CASE("eom: fixed points and hand values") {
  const PhaseState zero{Vector::Zero(2), Vector::Zero(2)};
  const PhaseState d0 = eom(hh(0.3, 0.9), zero);
  CHECK(d0.q.isZero(0.0));
  CHECK(d0.p.isZero(0.0));
  const PhaseState d = eom(hh(0.5, 0.7), PhaseState{v2(1, 1), v2(0.2, 0.3)});
  CHECK(d.q == v2(0.2, 0.3));
  CHECK(d.p[0] == doctest::Approx(-2.0));
  CHECK(d.p[1] == doctest::Approx(-0.8));
  const PhaseState w = eom(SystemSpec{DoubleWell{-1.0}}, PhaseState{v1(1.0), v1(0.0)});
  CHECK(w.q[0] == 0.0);
  CHECK(w.p[0] == 0.0);
}

TEST_CASE("hamiltonian sums kinetic and potential energy") {
  const PhaseState s{v2(0.1, -0.2), v2(0.3, 0.05)};
  CHECK(hamiltonian(hh(1, 1), s) == doctest::Approx(kinetic(s.p) + potential(hh(1, 1), s.q)));
}

TEST_CASE("morse_series_coefficient") {
  CHECK(morse_series_coefficient(0, 1.7) == -1.0);
  CHECK(morse_series_coefficient(1, 1.7) == 0.0);
  CHECK(morse_series_coefficient(2, 2.0) == doctest::Approx(4.0));
  // Series reproduces V near the minimum.
  const double a = 1.3, x = 0.05;
  double sum = 0.0, xn = 1.0;
  for (int n = 0; n <= 10; ++n, xn *= x) sum += morse_series_coefficient(n, a) * xn;
  CHECK(sum == doctest::Approx(potential(SystemSpec{Morse{a}}, v1(1.0 + x))).epsilon(1e-12));
}

TEST_CASE("families: names, dimensions and lambda round trip") {
  for (auto f : {SystemFamily::HenonHeiles, SystemFamily::Morse, SystemFamily::DoubleWell}) {
    CHECK(parse_family(family_name(f)) == f);
    const Vector lam = Vector::Constant(family_lambda_dim(f), 0.7);
    const SystemSpec s = SystemSpec::from_lambda(f, lam);
    CHECK(s.family() == f);
    CHECK(s.dim() == family_dim(f));
    CHECK(s.lambda() == lam);
  }
  CHECK_THROWS_AS(parse_family("pendulum"), ConfigError);
  CHECK_THROWS(SystemSpec::from_lambda(SystemFamily::HenonHeiles, v1(0.5)));
}
