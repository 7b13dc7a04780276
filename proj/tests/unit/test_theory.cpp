#include <doctest.h>

#include <cmath>

#include "hamlearn/error.hpp"
#include "hamlearn/theory.hpp"

using namespace hamlearn;

namespace {

Vector vec_of(const Matrix& a) { return Eigen::Map<const Vector>(a.data(), a.size()); }

const Matrix kA = (Matrix(2, 2) << 0.9, 0.2, -0.3, 1.1).finished();
const Vector kZ0 = (Vector(2) << 0.5, -0.4).finished();

}  // namespace

TEST_CASE("fd_variance_predicted: limits") {
  const double s = 0.2, tau = 0.1;
  CHECK(fd_variance_predicted(0.0, tau, 0.05) == 0.0);
  const double big = 100 * tau;
  CHECK(fd_variance_predicted(s, tau, big) == doctest::Approx(2 * s * s / (big * big)).epsilon(1e-12));
  const double small = 1e-4 * tau;
  CHECK(fd_variance_predicted(s, tau, small) == doctest::Approx(2 * s * s / (small * tau)).epsilon(1e-4));
}

TEST_CASE("fd_variance_check: Monte-Carlo agrees within three standard errors") {
  const double tau = 0.2;
  std::vector<double> ds;
  for (double f : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0}) ds.push_back(f * tau);
  const auto rows = fd_variance_check(0.1, tau, ds, 100000, 5);
  REQUIRE(rows.size() == ds.size());
  for (const auto& r : rows) {
    CHECK(std::abs(r.z) <= 3.0);
    CHECK(r.stderr_ > 0.0);
  }
  CHECK(fd_variance_csv(rows).rfind("ds,empirical_var,predicted_var,stderr,z\n", 0) == 0);
  for (const auto& r : fd_variance_check(0.0, tau, ds, 1000, 5)) CHECK(r.empirical == 0.0);
}

TEST_CASE("expected_gradient_mc: zero noise returns the clean gradient") {
  const auto grad = linear_map_batch_gradient(kA);
  const Vector zn = (Vector(2) << 0.3, 0.1).finished();
  const auto est = expected_gradient_mc(grad, kZ0, zn, 1, TheoryNoise{0.0, 0.1, 0.1}, McOptions{1000, 100}, 1);
  CHECK(est.mean == grad(kZ0, zn));
  CHECK(est.stderr_.isZero(0.0));
}

TEST_CASE("expected_gradient_mc: reproducible; standard errors shrink like 1/sqrt(trials)") {
  const AsrnnModel m = tiny_model(0.1, 11);
  const Vector lam = Vector::Constant(1, 0.5);
  const Vector zn = (Vector(2) << 0.55, -0.2).finished();
  const TheoryNoise noise{0.05, 0.2, 0.1};
  McOptions opt{20000, 200, false};
  const auto a = expected_gradient_mc(m, kZ0, zn, lam, 2, noise, opt, 3);
  const auto b = expected_gradient_mc(m, kZ0, zn, lam, 2, noise, opt, 3);
  CHECK(a.mean == b.mean);
  opt.trials = 40000;
  const auto c = expected_gradient_mc(m, kZ0, zn, lam, 2, noise, opt, 4);
  const double ratio = a.stderr_.norm() / c.stderr_.norm();
  CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.1));
}

TEST_CASE("linear model: noise bias matches its closed form") {
  // E[∇] − ∇_clean = 2σ²A − 2σ²a^N·I for vec(A); without correlation only
  // the 2σ²A term is left (the input noise enters the Gram matrix).
  const auto grad = linear_map_batch_gradient(kA);
  const Vector zn = kA * kZ0;
  const double sigma = 0.05, tau = 0.2, dt = 0.1;
  const std::size_t n = 2;
  const McOptions opt{400000, 1000, true};
  for (bool correlated : {false, true}) {
    const TheoryNoise noise{sigma, tau, dt, true, correlated};
    const auto est = expected_gradient_mc(grad, kZ0, zn, n, noise, opt, 8);
    Matrix expected = 2 * sigma * sigma * kA;
    if (correlated) expected -= 2 * sigma * sigma * std::exp(-static_cast<double>(n) * dt / tau) * Matrix::Identity(2, 2);
    const Vector bias = est.mean - est.clean;
    const Vector z = (bias - vec_of(expected)).cwiseQuotient(est.stderr_);
    INFO("correlated=" << correlated << " bias=" << bias.transpose() << " expected=" << vec_of(expected).transpose());
    CHECK(z.cwiseAbs().maxCoeff() <= 3.0);
  }
}

TEST_CASE("bias_scaling_fit: quadratic growth on the linear model") {
  const auto grad = linear_map_batch_gradient(kA);
  const auto r = bias_scaling_fit(grad, kZ0, kA * kZ0, 1, 0.2, 0.1, {1e-3, 2e-3, 5e-3, 1e-2},
                                  McOptions{100000, 1000, true}, 2);
  CHECK_FALSE(r.inconclusive);
  CHECK(r.slope == doctest::Approx(2.0).epsilon(0.05));
  CHECK(bias_scaling_csv(r).rfind("sigma,bias_norm,predicted,stderr,z\n", 0) == 0);
}

TEST_CASE("bias_scaling_fit: two trials is handled and flagged") {
  const auto grad = linear_map_batch_gradient(kA);
  const auto r = bias_scaling_fit(grad, kZ0, kA * kZ0, 1, 0.2, 0.1, {1e-3, 1e-2}, McOptions{2, 1000, true}, 2);
  CHECK(r.rows.size() == 2);
  CHECK_THROWS_AS(bias_scaling_fit(grad, kZ0, kZ0, 1, 0.2, 0.1, {1e-3}, McOptions{}, 1), ContractError);
}

TEST_CASE("divergence_parameter_gradient is finite and nonzero on a nonlinear model") {
  const AsrnnModel m = tiny_model(0.1, 11);
  const Vector d = divergence_parameter_gradient(m, kZ0, Vector::Constant(1, 0.5), 3);
  CHECK(d.size() == static_cast<Eigen::Index>(m.parameter_count()));
  CHECK(d.allFinite());
  CHECK(d.norm() > 0.0);
}

TEST_CASE("correlation_decay_check: vanishing correlation time gives no gap") {
  const AsrnnModel m = tiny_model(0.1, 11);
  const Vector lam = Vector::Constant(1, 0.5);
  const PhaseState e = predict(m, PhaseState{kZ0.head(1), kZ0.tail(1)}, lam, 3).states.back();
  const Vector zn = (Vector(2) << e.q, e.p).finished();
  const auto r = correlation_decay_check(m, kZ0, zn, lam, {1, 2}, 1e-4, 1e-2, McOptions{20000, 1000, true}, 3);
  for (const auto& row : r.rows) {
    CHECK(row.predicted == 0.0);
    CHECK(std::abs(row.ratio) <= 3.0 * row.ratio_stderr + 1e-300);
  }
  CHECK(r.inconclusive);
  CHECK(correlation_decay_csv(r).rfind("n,gap_norm,gap_stderr,ratio,predicted,ratio_stderr,z\n", 0) == 0);
}

TEST_CASE("ahnn_bias_scaling: no noise, no gap") {
  const AsrnnModel m = tiny_model(0.1, 11);
  const auto r = ahnn_bias_scaling(m, kZ0, Vector::Constant(1, 0.5), {0.1, 0.2}, 0.2, 0.0, McOptions{2000, 500}, 1);
  for (const auto& row : r.rows) CHECK(row.gap_norm < 1e-12);
  CHECK(r.inconclusive);
  REQUIRE(r.ratios.size() == 1);
  CHECK(r.ratios[0].predicted ==
        doctest::Approx((-std::expm1(-0.5) / 0.1) / (-std::expm1(-1.0) / 0.2)).epsilon(1e-12));
  CHECK(ahnn_scaling_csv(r).rfind("ds,", 0) == 0);
}
