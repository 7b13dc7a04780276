#include <doctest.h>

#include <cmath>

#include "hamlearn/error.hpp"
#include "hamlearn/mlp.hpp"
#include "helpers.hpp"

using namespace hamlearn;

namespace {

MlpParams unit_net() {
  MlpSpec spec{{1, 1, 1}};
  MlpParams p = MlpParams::zeros(spec);
  p.weights[0](0, 0) = 1.0;
  p.weights[1](0, 0) = 1.0;
  return p;
}

}  // namespace

TEST_CASE("mlp_eval: zero parameters give zero output") {
  MlpSpec spec{{3, 7, 7, 1}};
  const MlpParams p = MlpParams::zeros(spec);
  CHECK(mlp_eval(spec, p, Vector::Random(3)) == 0.0);
}

TEST_CASE("mlp_eval: single tanh unit") {
  MlpSpec spec{{1, 1, 1}};
  const MlpParams p = unit_net();
  CHECK(mlp_eval(spec, p, Vector::Zero(1)) == 0.0);
  CHECK(mlp_eval(spec, p, Vector::Ones(1)) == doctest::Approx(0.7615941559557649).epsilon(1e-15));
}

TEST_CASE("mlp_input_gradient: hand chain rule and zero net") {
  MlpSpec spec{{1, 1, 1}};
  CHECK(mlp_input_gradient(spec, unit_net(), Vector::Zero(1))[0] == doctest::Approx(1.0));
  MlpSpec big{{4, 30, 30, 30, 1}};
  CHECK(mlp_input_gradient(big, MlpParams::zeros(big), Vector::Random(4)).isZero(0.0));
}

TEST_CASE("mlp_input_gradient: matches central differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    MlpSpec spec{{4, 30, 30, 30, 1}};
    const MlpParams p = init_gaussian(spec, seed);
    const Vector x = Vector::Random(4);
    const Vector g = mlp_input_gradient(spec, p, x);
    const Vector fd = central_diff([&](const Vector& y) { return mlp_eval(spec, p, y); }, x, 1e-6);
    CHECK(rel_err(g, fd) < 1e-6);
  }
}

TEST_CASE("batched evaluation agrees with single samples") {
  MlpSpec spec{{2, 10, 10, 1}};
  const MlpParams p = init_gaussian(spec, 5);
  const Matrix x = Matrix::Random(2, 7);
  const auto y = mlp_eval_batch(p, x);
  const Matrix g = mlp_input_gradient_batch(p, x);
  for (Eigen::Index c = 0; c < 7; ++c) {
    CHECK(y[c] == doctest::Approx(mlp_eval(spec, p, x.col(c))).epsilon(1e-14));
    CHECK((g.col(c) - mlp_input_gradient(spec, p, x.col(c))).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("tape: gradient of the output w.r.t. the final bias is one") {
  MlpSpec spec{{1, 4, 1}};
  ad::Tape tape;
  const MlpParams p = MlpParams::zeros(spec);
  const MlpVars vars = register_params(tape, p);
  const ad::Var out = mlp_eval(tape, vars, tape.constant(Matrix::Ones(1, 1)));
  const MlpParams g = grad_params(tape, out, vars);
  CHECK(g.biases.back()[0] == 1.0);
}

TEST_CASE("tape: second-order gradient through the input-gradient network") {
  MlpSpec spec{{3, 8, 8, 1}};
  const MlpParams p0 = init_gaussian(spec, 9);
  const Matrix x = Matrix::Random(3, 5);
  auto objective = [&](const MlpParams& p) {
    const Matrix g = mlp_input_gradient_batch(p, x);
    return g.squaredNorm();
  };
  ad::Tape tape;
  const MlpVars vars = register_params(tape, p0);
  const ad::Var out = tape.squared_norm(mlp_input_gradient(tape, vars, tape.constant(x)));
  CHECK(tape.value(out)(0, 0) == doctest::Approx(objective(p0)).epsilon(1e-13));
  const Vector g = grad_params(tape, out, vars).flatten();
  const Vector fd = central_diff(
      [&](const Vector& flat) {
        MlpParams p = p0;
        p.unflatten(flat);
        return objective(p);
      },
      p0.flatten(), 1e-5);
  CHECK(rel_err(g, fd) < 1e-4);
}

TEST_CASE("tape: replay gives bit-identical gradients") {
  MlpSpec spec{{2, 6, 1}};
  const MlpParams p = init_gaussian(spec, 4);
  ad::Tape tape;
  const MlpVars vars = register_params(tape, p);
  const ad::Var out = tape.squared_norm(mlp_input_gradient(tape, vars, tape.constant(Matrix::Random(2, 3))));
  const Vector g1 = grad_params(tape, out, vars).flatten();
  tape.replay();
  const Vector g2 = grad_params(tape, out, vars).flatten();
  CHECK(g1 == g2);
}

TEST_CASE("tape: every op differentiates like its finite difference") {
  const Matrix a0 = Matrix::Random(3, 4);
  const Matrix b0 = Matrix::Random(3, 4);
  const Matrix w0 = Matrix::Random(3, 3);
  const Vector bias0 = Vector::Random(3);
  auto build = [&](ad::Tape& t, ad::Var a, ad::Var b, ad::Var w, ad::Var bias) {
    ad::Var x = t.add_bias(t.matmul(w, a), bias);
    x = t.tanh(x);
    x = t.add(x, t.mul(a, b));
    x = t.sub(x, t.scale(t.one_minus_square(b), 0.3));
    ad::Var top = t.rows(x, 0, 2);
    ad::Var stacked = t.vstack(top, t.matmul_tn(w, t.cols(x, 0, 4)));
    return t.add(t.add(t.sum(stacked), t.squared_norm(x)), t.column_norm_sum(top));
  };
  auto value = [&](const Vector& flat) {
    ad::Tape t;
    Matrix a = Eigen::Map<const Matrix>(flat.data(), 3, 4);
    return t.value(build(t, t.constant(a), t.constant(b0), t.constant(w0), t.constant(bias0)))(0, 0);
  };
  ad::Tape t;
  ad::Var a = t.param(a0);
  ad::Var out = build(t, a, t.param(b0), t.param(w0), t.param(bias0));
  t.backward(out);
  const Vector g = Eigen::Map<const Vector>(t.adjoint(a).data(), 12);
  const Vector fd = central_diff(value, Eigen::Map<const Vector>(a0.data(), 12), 1e-6);
  CHECK(rel_err(g, fd) < 1e-7);
}

TEST_CASE("init_gaussian: reproducible, zero biases, variance 1/fan_in") {
  MlpSpec spec{{4, 30, 30, 30, 1}};
  const MlpParams a = init_gaussian(spec, 123);
  CHECK(a == init_gaussian(spec, 123));
  CHECK_FALSE(a == init_gaussian(spec, 124));
  for (const auto& b : a.biases) CHECK(b.isZero(0.0));
  const Matrix& w = a.weights[1];  // 30x30, fan_in 30
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / static_cast<double>(w.size() - 1);
  CHECK(std::abs(var - 1.0 / 30.0) < 0.2 / 30.0);
}

TEST_CASE("MlpSpec::validate rejects degenerate shapes") {
  CHECK_THROWS_AS((MlpSpec{{2, 1}}.validate()), ContractError);
  CHECK_THROWS_AS((MlpSpec{{2, 4, 2}}.validate()), ContractError);
  CHECK_NOTHROW(MlpSpec{{2, 4, 1}}.validate());
}

TEST_CASE("flatten/unflatten round trip") {
  MlpSpec spec{{2, 3, 1}};
  const MlpParams p = init_gaussian(spec, 1);
  MlpParams q = MlpParams::zeros(spec);
  q.unflatten(p.flatten());
  CHECK(p == q);
  CHECK(p.size() == spec.parameter_count());
  CHECK(spec.parameter_count() == 2 * 3 + 3 + 3 + 1);
}
