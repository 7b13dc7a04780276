#include <doctest.h>

#include <limits>

#include <algorithm>
#include <cmath>
#include <random>

#include "hamlearn/error.hpp"
#include "hamlearn/evaluate.hpp"
#include "hamlearn/model.hpp"
#include "hamlearn/optim.hpp"
#include "helpers.hpp"
#include "model_fixtures.hpp"

using namespace hamlearn;

namespace {

class Harmonic final : public ForceProvider {
 public:
  int dim() const override { return 1; }
  Matrix dVdq(const Matrix& q, const Vector&) const override { return q; }
  Matrix dKdp(const Matrix& p) const override { return p; }
};

const Vector kLam = Vector::Constant(1, 0.3);

PhaseState s1(double q, double p) { return {Vector::Constant(1, q), Vector::Constant(1, p)}; }

AsrnnModel toy(std::uint64_t seed) { return AsrnnModel::init(MlpSpec{{1, 5, 1}}, MlpSpec{{2, 5, 1}}, 0.1, seed); }

std::vector<SparseSample> random_samples(const AsrnnModel& m, int n, std::uint64_t seed, double noise) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::uniform_int_distribution<int> k(1, 4);
  std::vector<SparseSample> out;
  for (int i = 0; i < n; ++i) {
    SparseSample s;
    s.z0 = s1(u(rng), u(rng));
    s.k = k(rng);
    s.lambda = Vector::Constant(1, u(rng));
    const auto t = predict(m, s.z0, s.lambda, static_cast<std::size_t>(s.k));
    s.z_obs = t.states.back();
    s.z_obs.q.array() += noise * u(rng);
    s.z_obs.p.array() += noise * u(rng);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("closed-form quadratic fixture is exact to 1e-8 in the gradient") {
  const AsrnnModel m = fixtures::harmonic_model(0.1);
  const ModelForces f(m);
  Matrix q = Matrix::Zero(1, 41);
  for (int i = 0; i <= 40; ++i) q(0, i) = -1.0 + 0.05 * i;
  CHECK((f.dVdq(q, kLam) - q).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((f.dKdp(q) - q).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("ModelForces: zero model gives zero forces") {
  const AsrnnModel m = AsrnnModel::zeros(MlpSpec{{2, 8, 1}}, MlpSpec{{4, 8, 1}}, 0.1);
  const ModelForces f(m);
  const Vector lam = (Vector(2) << 0.4, 0.6).finished();
  CHECK(f.dVdq(Matrix::Random(2, 3), lam).isZero(0.0));
  CHECK(f.dKdp(Matrix::Random(2, 3)).isZero(0.0));
}

TEST_CASE("ModelForces: finite differences of the scalar networks") {
  const AsrnnModel m = AsrnnModel::init(MlpSpec{{2, 10, 10, 1}}, MlpSpec{{4, 10, 10, 1}}, 0.1, 3);
  const ModelForces f(m);
  const Vector lam = (Vector(2) << 0.4, 0.6).finished();
  const Vector q = (Vector(2) << 0.2, -0.3).finished();
  const Vector p = (Vector(2) << 0.1, 0.25).finished();
  const Vector gv = f.dVdq(q, lam);
  CHECK(gv.size() == 2);
  const Vector fdv = central_diff(
      [&](const Vector& x) {
        Vector in(4);
        in << x, lam;
        return mlp_eval(m.v_spec, m.v_params, in);
      },
      q, 1e-6);
  CHECK(rel_err(gv, fdv) < 1e-6);
  const Vector fdk = central_diff([&](const Vector& x) { return mlp_eval(m.k_spec, m.k_params, x); }, p, 1e-6);
  CHECK(rel_err(f.dKdp(p), fdk) < 1e-6);
  // λ enters the force but not its shape.
  const Vector lam2 = (Vector(2) << 0.5, 0.6).finished();
  CHECK_FALSE(f.dVdq(q, lam2).isApprox(gv));
}

TEST_CASE("predict: zero model stays put; composition is exact") {
  const AsrnnModel z = AsrnnModel::zeros(MlpSpec{{1, 4, 1}}, MlpSpec{{2, 4, 1}}, 0.1);
  const auto t = predict(z, s1(0.3, -0.2), kLam, 20);
  for (const auto& s : t.states) CHECK(s == s1(0.3, -0.2));
  const AsrnnModel m = toy(2);
  const auto a = predict(m, s1(0.3, -0.2), kLam, 7);
  const auto b = predict(m, a.states.back(), kLam, 5);
  CHECK(b.states.back() == predict(m, s1(0.3, -0.2), kLam, 12).states.back());
}

TEST_CASE("predict: exact-energy model reproduces the analytic rollout") {
  const AsrnnModel m = fixtures::harmonic_model(0.1);
  const auto mine = predict(m, s1(0.8, -0.1), kLam, 100);
  const auto ref = rollout(Harmonic{}, s1(0.8, -0.1), kLam, 0.1, 100);
  double worst = 0.0;
  for (std::size_t n = 0; n <= 100; ++n) {
    worst = std::max(worst, std::abs(mine.states[n].q[0] - ref.states[n].q[0]));
    worst = std::max(worst, std::abs(mine.states[n].p[0] - ref.states[n].p[0]));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("asrnn_loss: hand value, oracle and permutation invariance") {
  const AsrnnModel z = AsrnnModel::zeros(MlpSpec{{1, 4, 1}}, MlpSpec{{2, 4, 1}}, 0.1);
  SparseSample s{s1(0.0, 1.0), s1(0.1, 1.0), 1, kLam};
  CHECK(asrnn_loss(z, {s}) == doctest::Approx(0.01).epsilon(1e-14));

  const AsrnnModel h = fixtures::harmonic_model(0.1);
  std::vector<SparseSample> data;
  for (int i = 0; i < 20; ++i) {
    const PhaseState z0 = s1(std::cos(i), 0.5 * std::sin(3 * i));
    data.push_back({z0, rollout(Harmonic{}, z0, kLam, 0.1, 1 + i % 14).states.back(), 1 + i % 14, kLam});
  }
  CHECK(asrnn_loss(h, data) < 1e-10);

  const AsrnnModel m = toy(5);
  auto noisy = random_samples(toy(6), 40, 1, 0.05);
  const double l0 = asrnn_loss(m, noisy);
  std::reverse(noisy.begin(), noisy.end());
  std::swap(noisy[3], noisy[17]);
  CHECK(asrnn_loss(m, noisy) == doctest::Approx(l0).epsilon(1e-13));
  // Chunking changes nothing beyond summation order.
  CHECK(asrnn_loss(m, noisy, LossOptions{true, 7}) == doctest::Approx(l0).epsilon(1e-13));
}

TEST_CASE("asrnn_loss_gradient: central differences on a toy model") {
  const AsrnnModel m = toy(7);
  std::vector<SparseSample> data = random_samples(toy(8), 12, 2, 0.05);
  for (auto& s : data) s.k = 3;
  for (bool squared : {true, false}) {
    const LossOptions opt{squared, 5};
    const LossGradient g = asrnn_loss_gradient(m, data, opt);
    CHECK(g.loss == doctest::Approx(asrnn_loss(m, data, opt)).epsilon(1e-13));
    const Vector fd = central_diff(
        [&](const Vector& th) {
          AsrnnModel x = m;
          x.unflatten(th);
          return asrnn_loss(x, data, opt);
        },
        m.flatten(), 1e-5);
    CHECK(rel_err(g.flatten(), fd) < 1e-4);
  }
}

TEST_CASE("asrnn_loss_gradient: zero at an exact fit, linear in the residual") {
  const AsrnnModel m = toy(9);
  const auto exact = random_samples(m, 15, 3, 0.0);
  CHECK(asrnn_loss_gradient(m, exact).flatten().norm() < 1e-8);

  const auto data = random_samples(toy(10), 15, 4, 0.02);
  auto doubled = data;
  for (auto& s : doubled) {
    const PhaseState zk = predict(m, s.z0, s.lambda, static_cast<std::size_t>(s.k)).states.back();
    s.z_obs.q = zk.q - 2.0 * (zk.q - s.z_obs.q);
    s.z_obs.p = zk.p - 2.0 * (zk.p - s.z_obs.p);
  }
  const Vector g1 = asrnn_loss_gradient(m, data).flatten();
  const Vector g2 = asrnn_loss_gradient(m, doubled).flatten();
  CHECK(rel_err(g2, 2.0 * g1) < 1e-10);
}

TEST_CASE("asrnn_loss: divergent rollout raises BlowupError") {
  AsrnnModel m = toy(1);
  // Saturated tanh keeps forces bounded, so poison the output layer instead.
  m.v_params.weights.back().setConstant(std::numeric_limits<double>::infinity());
  SparseSample s{s1(0.5, 0.5), s1(0.5, 0.5), 14, kLam};
  CHECK_THROWS_AS(asrnn_loss(m, {s}), BlowupError);
}

TEST_CASE("rollout_functional_gradient: central differences") {
  const AsrnnModel m = toy(11);
  const Vector w = (Vector(2) << 0.7, -1.3).finished();
  const PhaseState z0 = s1(0.4, -0.2);
  const Vector g = rollout_functional_gradient(m, z0, kLam, 4, w).flatten();
  const Vector fd = central_diff(
      [&](const Vector& th) {
        AsrnnModel x = m;
        x.unflatten(th);
        const PhaseState e = predict(x, z0, kLam, 4).states.back();
        return w[0] * e.q[0] + w[1] * e.p[0];
      },
      m.flatten(), 1e-5);
  CHECK(rel_err(g, fd) < 1e-6);
}

TEST_CASE("ahnn_fd_loss: hand values") {
  const AsrnnModel z = AsrnnModel::zeros(MlpSpec{{1, 4, 1}}, MlpSpec{{2, 4, 1}}, 0.1);
  CHECK(ahnn_fd_loss(z, {FdPair{s1(0.2, 0.3), s1(0.2, 0.3), kLam}}, 0.1) == 0.0);
  CHECK(ahnn_fd_loss(z, {FdPair{s1(0.0, 1.0), s1(0.1, 1.0), kLam}}, 0.1) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("ahnn_fd_loss: second-order Taylor remainder on exact data") {
  const AsrnnModel h = fixtures::harmonic_model(0.1);
  auto loss_at = [&](double ds) {
    std::vector<FdPair> pairs;
    for (int i = 0; i < 10; ++i) {
      const double phase = 0.6 * i;
      const PhaseState a = s1(std::cos(phase), -std::sin(phase));
      const PhaseState b = s1(std::cos(phase + ds), -std::sin(phase + ds));
      pairs.push_back({a, b, kLam});
    }
    return ahnn_fd_loss(h, pairs, ds);
  };
  const double ratio = loss_at(0.02) / loss_at(0.01);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.05));
  CHECK(loss_at(0.01) < 1e-4);
}

TEST_CASE("ahnn_fd_loss_gradient: central differences") {
  const AsrnnModel m = toy(12);
  std::vector<FdPair> pairs;
  for (int i = 0; i < 8; ++i) pairs.push_back({s1(0.1 * i, -0.05 * i), s1(0.1 * i + 0.02, 0.03), kLam});
  const LossGradient g = ahnn_fd_loss_gradient(m, pairs, 0.1);
  CHECK(g.loss == doctest::Approx(ahnn_fd_loss(m, pairs, 0.1)).epsilon(1e-13));
  const Vector fd = central_diff(
      [&](const Vector& th) {
        AsrnnModel x = m;
        x.unflatten(th);
        return ahnn_fd_loss(x, pairs, 0.1);
      },
      m.flatten(), 1e-5);
  CHECK(rel_err(g.flatten(), fd) < 1e-4);
}

TEST_CASE("learned curves: zero model, single point") {
  const AsrnnModel z = AsrnnModel::zeros(MlpSpec{{1, 4, 1}}, MlpSpec{{2, 4, 1}}, 0.1);
  for (double v : learned_potential_curve(z, {Vector::Constant(1, 0.5), Vector::Constant(1, 1.5)}, kLam))
    CHECK(v == 0.0);
  const AsrnnModel m = toy(13);
  const double v = learned_potential_curve(m, {Vector::Constant(1, 0.5)}, kLam).front();
  CHECK(v == doctest::Approx(mlp_eval(m.v_spec, m.v_params, (Vector(2) << 0.5, 0.3).finished())).epsilon(1e-14));
  const double k = learned_kinetic_curve(m, {Vector::Constant(1, -0.4)}).front();
  CHECK(k == doctest::Approx(mlp_eval(m.k_spec, m.k_params, Vector::Constant(1, -0.4))).epsilon(1e-14));
  const PhaseState s = s1(0.5, -0.4);
  CHECK(learned_hamiltonian(m, s, kLam) == doctest::Approx(v + k).epsilon(1e-14));
}

TEST_CASE("learned potential curve of a network fitted to the Morse potential") {
  // Regress the V network directly on V(q) for α = 2, then compare shapes.
  const SystemSpec spec{Morse{2.0}};
  const Vector lam = Vector::Constant(1, 2.0);
  const int n = 60;
  Matrix x(2, n);
  Eigen::RowVectorXd y(n);
  std::vector<Vector> grid;
  std::vector<double> truth;
  for (int i = 0; i < n; ++i) {
    const double q = 0.5 + 2.5 * i / (n - 1.0);
    x(0, i) = q;
    x(1, i) = 2.0;
    y(i) = potential(spec, Vector::Constant(1, q));
    grid.push_back(Vector::Constant(1, q));
    truth.push_back(y(i));
  }
  AsrnnModel m = AsrnnModel::init(MlpSpec{{1, 4, 1}}, MlpSpec{{2, 20, 20, 1}}, 0.1, 21);
  Objective f = [&](const Vector& th, Vector& g) {
    MlpParams p = m.v_params;
    p.unflatten(th);
    ad::Tape tape;
    const MlpVars vars = register_params(tape, p);
    const ad::Var out =
        tape.squared_norm(tape.sub(mlp_eval(tape, vars, tape.constant(x)), tape.constant(y)));
    g = grad_params(tape, out, vars).flatten();
    return tape.value(out)(0, 0);
  };
  const LbfgsResult r = lbfgs_minimize(f, m.v_params.flatten(), 3000);
  m.v_params.unflatten(r.x);
  const OffsetAlignment a = align_offset(learned_potential_curve(m, grid, lam), truth);
  CHECK(a.max_abs_residual < 1e-3);
}

TEST_CASE("model JSON round trip and malformed input") {
  const AsrnnModel m = toy(14);
  const auto j = model_to_json(m, 14, {{"note", "x"}});
  CHECK(j.at("format") == "hamlearn.asrnn/1");
  const AsrnnModel back = model_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.flatten() == m.flatten());
  CHECK(back.dt == m.dt);
  auto broken = j;
  broken.erase("potential");
  CHECK_THROWS_AS(model_from_json(broken), IoError);
}

TEST_CASE("flatten/unflatten keeps kinetic parameters first") {
  AsrnnModel m = toy(15);
  const Vector th = m.flatten();
  CHECK(th.head(static_cast<Eigen::Index>(m.k_params.size())) == m.k_params.flatten());
  AsrnnModel z = AsrnnModel::zeros(m.k_spec, m.v_spec, 0.1);
  z.unflatten(th);
  CHECK(z.flatten() == th);
  CHECK(m.parameter_count() == static_cast<std::size_t>(th.size()));
}
