#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hamlearn/error.hpp"
#include "hamlearn/symreg.hpp"

using namespace hamlearn;

namespace {

long binom(int n, int k) {
  long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

TEST_CASE("PolyLibrary: graded order, names and size") {
  const PolyLibrary lib = PolyLibrary::make({"q1", "q2"}, 2);
  REQUIRE(lib.size() == 6);
  const char* names[] = {"1", "q1", "q2", "q1^2", "q1*q2", "q2^2"};
  for (std::size_t i = 0; i < 6; ++i) CHECK(lib.term_name(i) == names[i]);
  CHECK(lib.index_of("q1*q2") == 4u);
  CHECK(lib.index_of(std::vector<int>{0, 2}) == 5u);
  CHECK(lib.constant_index() == 0u);
  CHECK_FALSE(lib.index_of("q3").has_value());
  for (int d = 1; d <= 4; ++d)
    for (int g = 0; g <= 5; ++g)
      CHECK(static_cast<long>(PolyLibrary::make(std::vector<std::string>(static_cast<std::size_t>(d), "x"), g).size()) ==
            binom(d + g, g));
}

TEST_CASE("build_design: hand-evaluated row and degree zero") {
  const PolyLibrary lib = PolyLibrary::make({"q1", "q2"}, 2);
  const Matrix x = (Matrix(2, 1) << 2.0, 3.0).finished();
  const Matrix a = build_design(x, lib);
  REQUIRE(a.rows() == 1);
  const double want[] = {1, 2, 3, 4, 6, 9};
  for (int j = 0; j < 6; ++j) CHECK(a(0, j) == want[j]);
  const Matrix ones = build_design(Matrix::Random(3, 5), PolyLibrary::make({"a", "b", "c"}, 0));
  CHECK(ones.cols() == 1);
  CHECK(ones.isOnes(0.0));
}

TEST_CASE("stlsq: exact recovery of a sparse polynomial in the span") {
  const PolyLibrary lib = PolyLibrary::make({"x", "y"}, 3);
  const Matrix x = Matrix::Random(2, 300);
  const Matrix a = build_design(x, lib);
  Vector truth = Vector::Zero(static_cast<Eigen::Index>(lib.size()));
  truth[static_cast<Eigen::Index>(*lib.index_of("x"))] = 1.5;
  truth[static_cast<Eigen::Index>(*lib.index_of("x*y^2"))] = -0.7;
  truth[static_cast<Eigen::Index>(*lib.index_of("1"))] = 0.3;
  const SparseFit f = stlsq(a, a * truth, {"t"}, lib, StlsqOptions{0.05});
  CHECK((f.target("t").coef - truth).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(f.support("t", true) == std::vector<std::string>{"x", "x*y^2"});
}

TEST_CASE("stlsq: threshold zero is the plain ridge solution") {
  const PolyLibrary lib = PolyLibrary::make({"x"}, 3);
  const Matrix a = build_design(Matrix::Random(1, 50), lib);
  const Vector y = Vector::Random(50);
  const double ridge = 1e-3;
  const SparseFit f = stlsq(a, y, {"t"}, lib, StlsqOptions{0.0, ridge});
  const Matrix lhs = a.transpose() * a + ridge * Matrix::Identity(4, 4);
  const Vector ref = lhs.ldlt().solve(a.transpose() * y);
  CHECK((f.target("t").coef - ref).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stlsq: noisy sparse target over 2000 samples") {
  const PolyLibrary lib = PolyLibrary::make({"q1", "q2"}, 3);
  Rng rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1e-4);
  Matrix x(2, 2000);
  Vector y(2000);
  for (int i = 0; i < 2000; ++i) {
    x(0, i) = u(rng);
    x(1, i) = u(rng);
    y[i] = 2.0 * x(0, i) - 0.5 * std::pow(x(1, i), 3) + noise(rng);
  }
  const SparseFit f = stlsq(build_design(x, lib), y, {"y"}, lib, StlsqOptions{0.05});
  CHECK(f.support("y") == std::vector<std::string>{"q1", "q2^3"});
  CHECK(f.coef("y", "q1") == doctest::Approx(2.0).epsilon(0.01));
  CHECK(f.coef("y", "q2^3") == doctest::Approx(-0.5).epsilon(0.01));
}

TEST_CASE("stlsq: rank-deficient support falls back to minimum norm with a warning") {
  const PolyLibrary lib = PolyLibrary::make({"x", "y"}, 1);
  Matrix x(2, 20);
  x.row(0) = Eigen::RowVectorXd::LinSpaced(20, -1, 1);
  x.row(1) = x.row(0);  // collinear
  const Matrix a = build_design(x, lib);
  const SparseFit f = stlsq(a, a.col(1) * 2.0, {"t"}, lib, StlsqOptions{0.05});
  CHECK(f.target("t").min_norm_fallback);
  CHECK_FALSE(f.warnings.empty());
  CHECK(f.coef("t", "x") == doctest::Approx(1.0));
  CHECK(f.coef("t", "y") == doctest::Approx(1.0));
}

TEST_CASE("stlsq: argument checks") {
  const PolyLibrary lib = PolyLibrary::make({"x"}, 2);
  const Matrix a = build_design(Matrix::Random(1, 10), lib);
  CHECK_THROWS_AS(stlsq(a, Vector::Zero(9), {"t"}, lib), ShapeError);
  CHECK_THROWS_AS(stlsq(a, Vector::Zero(10), {"t"}, lib, StlsqOptions{-1.0}), ContractError);
}

TEST_CASE("recover_eom: analytic Henon-Heiles forces are recovered exactly") {
  const AnalyticForces oracle(SystemFamily::HenonHeiles);
  const Vector lam = (Vector(2) << 0.4, 0.6).finished();
  EomSampling es;
  es.seed = 3;
  const SparseFit f = recover_eom(oracle, 0.1, SystemFamily::HenonHeiles, lam, es);
  CHECK(std::abs(f.params.at("alpha_hat") - 0.4) < 1e-8);
  CHECK(std::abs(f.params.at("beta_hat") - 0.6) < 1e-8);
  CHECK(f.params.at("support_exact") == 1.0);
  CHECK(std::abs(f.coef("dq1", "p1") - 1.0) < 1e-6);
  const auto expected = henon_heiles_expected_support();
  for (const auto& [target, terms] : expected) {
    auto got = f.support(target);
    auto want = terms;
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    CHECK(got == want);
  }
}

TEST_CASE("fit_hamiltonian_polys: analytic kinetic energy and Morse potential") {
  const AnalyticForces oracle(SystemFamily::Morse);
  const Vector lam = Vector::Constant(1, 2.0);
  HamiltonianSampling hs;
  hs.seed = 5;
  hs.e_max = -0.8;
  StlsqOptions opt{0.05};
  opt.protect_constant = true;
  const HamiltonianFits h = fit_hamiltonian_polys(oracle, 0.1, energy_model_of(SystemSpec{Morse{2.0}}),
                                                  SystemFamily::Morse, lam, hs, 6, opt, 1.0);
  CHECK(h.kinetic.support("K", true) == std::vector<std::string>{"p^2"});
  CHECK(std::abs(h.kinetic.coef("K", "p^2") - 0.5) < 1e-6);
  const auto& v = h.potential;
  const double c2 = v.target("V").coef[static_cast<Eigen::Index>(*v.lib.index_of(std::vector<int>{2}))];
  const double c1 = v.target("V").coef[static_cast<Eigen::Index>(*v.lib.index_of(std::vector<int>{1}))];
  CHECK(c2 == doctest::Approx(4.0).epsilon(0.01));
  CHECK(std::abs(c1) < 0.02);
  // The constant column survives regardless of its size.
  CHECK(v.lib.constant_index().has_value());
  CHECK(extract_morse_alpha(v) == doctest::Approx(2.0).epsilon(0.005));
}

TEST_CASE("extract_morse_alpha") {
  const PolyLibrary lib = PolyLibrary::make({"qt"}, 4);
  SparseFit f;
  f.lib = lib;
  TargetFit t;
  t.name = "V";
  t.coef = Vector::Zero(5);
  t.coef[2] = 4.0;
  f.targets.push_back(t);
  CHECK(extract_morse_alpha(f) == 2.0);
  f.targets[0].coef[2] = 0.0;
  CHECK(extract_morse_alpha(f) == 0.0);
  f.targets[0].coef[2] = -1.0;
  CHECK_THROWS_AS(extract_morse_alpha(f), Error);
}

TEST_CASE("fit JSON and rendering") {
  const PolyLibrary lib = PolyLibrary::make({"x"}, 2);
  const Matrix a = build_design(Matrix::Random(1, 30), lib);
  const SparseFit f = stlsq(a, a.col(2) * 3.0, {"t"}, lib);
  const auto j = fit_to_json(f);
  CHECK(j.dump().find("x^2") != std::string::npos);
  CHECK(render_fit(f).find("t =") != std::string::npos);
}
