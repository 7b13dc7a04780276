#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "hamlearn/error.hpp"
#include "hamlearn/optim.hpp"
#include "hamlearn/train.hpp"

using namespace hamlearn;

namespace {

class Harmonic final : public ForceProvider {
 public:
  int dim() const override { return 1; }
  Matrix dVdq(const Matrix& q, const Vector&) const override { return q; }
  Matrix dKdp(const Matrix& p) const override { return p; }
};

// Noise-free harmonic-oscillator windows; the family tag only fixes the
// dimensions (one coordinate, one parameter channel).
SparseDataset harmonic_dataset(std::size_t n, std::uint64_t seed) {
  SparseDataset ds;
  ds.family = SystemFamily::Morse;
  ds.dt = 0.1;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> k(1, 14);
  const Vector lam = Vector::Constant(1, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    SparseSample s;
    s.z0 = PhaseState{Vector::Constant(1, u(rng)), Vector::Constant(1, u(rng))};
    s.k = k(rng);
    s.z_obs = rollout(Harmonic{}, s.z0, lam, 0.1, static_cast<std::size_t>(s.k)).states.back();
    s.lambda = lam;
    ds.samples.push_back(s);
  }
  return ds;
}

const Architecture kToy{MlpSpec{{1, 8, 1}}, MlpSpec{{2, 8, 1}}};

}  // namespace

TEST_CASE("lbfgs: quadratic bowl in at most 2·dim iterations") {
  const int n = 10;
  Vector target(n);
  for (int i = 0; i < n; ++i) target[i] = std::sin(i + 1.0);
  Objective f = [&](const Vector& x, Vector& g) {
    g = 2.0 * (x - target);
    return (x - target).squaredNorm();
  };
  const LbfgsResult r = lbfgs_minimize(f, Vector::Zero(n), 2 * n);
  CHECK((r.x - target).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(r.iterations <= 2 * n);
}

TEST_CASE("lbfgs: ill-conditioned quadratic") {
  const int n = 6;
  Vector scale(n);
  scale << 1, 3, 10, 30, 100, 300;
  Objective f = [&](const Vector& x, Vector& g) {
    g = 2.0 * scale.cwiseProduct(x);
    return x.cwiseProduct(scale).dot(x);
  };
  const LbfgsResult r = lbfgs_minimize(f, Vector::Ones(n), 200);
  CHECK(r.x.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("lbfgs: Rosenbrock from (-1.2, 1)") {
  Objective f = [](const Vector& x, Vector& g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  const LbfgsResult r = lbfgs_minimize(f, (Vector(2) << -1.2, 1.0).finished(), 500);
  CHECK(r.f < 1e-8);
}

TEST_CASE("lbfgs: zero gradient at the start returns immediately") {
  Objective f = [](const Vector& x, Vector& g) {
    g = Vector::Zero(x.size());
    return 1.0;
  };
  const Vector x0 = (Vector(3) << 1, 2, 3).finished();
  const LbfgsResult r = lbfgs_minimize(f, x0, 50);
  CHECK(r.x == x0);
  CHECK(r.iterations == 0);
  CHECK(r.status == LbfgsStatus::Converged);
}

TEST_CASE("lbfgs: infeasible regions are treated as +inf") {
  // log barrier: f = x - log(x) with a minimum at 1, undefined for x <= 0.
  Objective f = [](const Vector& x, Vector& g) {
    g.resize(1);
    if (x[0] <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    g[0] = 1.0 - 1.0 / x[0];
    return x[0] - std::log(x[0]);
  };
  const LbfgsResult r = lbfgs_minimize(f, Vector::Constant(1, 8.0), 100);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  Objective bad = [](const Vector&, Vector& g) {
    g = Vector::Zero(1);
    return std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(Lbfgs(bad, Vector::Zero(1)), TrainingError);
}

TEST_CASE("adam: minimizes a smooth bowl") {
  Adam adam(2, AdamOptions{0.05});
  Vector x = (Vector(2) << 2.0, -1.0).finished();
  for (int i = 0; i < 2000; ++i) adam.step(x, 2.0 * x);
  CHECK(x.norm() < 1e-3);
}

TEST_CASE("split_train_validation is a deterministic partition") {
  const SparseDataset ds = harmonic_dataset(40, 1);
  const auto [a, b] = split_train_validation(ds.samples, 0.25, 9);
  CHECK(a.size() == 30);
  CHECK(b.size() == 10);
  const auto [c, d] = split_train_validation(ds.samples, 0.25, 9);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b[i].z0 == d[i].z0);
  std::set<double> seen;
  for (const auto& s : a) seen.insert(s.z0.q[0]);
  for (const auto& s : b) seen.insert(s.z0.q[0]);
  CHECK(seen.size() == 40);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  cfg.batch_size = 16;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.optimizer = OptimizerKind::Adam;
  CHECK_NOTHROW(cfg.validate());
  cfg.validation_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("train_one: epochs=0 returns the initialization") {
  const SparseDataset ds = harmonic_dataset(20, 2);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto [m, rep] = train_one(ds, kToy, cfg, 5);
  CHECK(m.flatten() == AsrnnModel::init(kToy.kinetic, kToy.potential, 0.1, 5).flatten());
  CHECK(rep.train_loss.empty());
}

TEST_CASE("train_one: converges on realizable noise-free data and is deterministic") {
  const SparseDataset ds = harmonic_dataset(200, 3);
  TrainConfig cfg;
  cfg.epochs = 200;
  const auto [m, rep] = train_one(ds, kToy, cfg, 17);
  REQUIRE_FALSE(rep.val_loss.empty());
  double best = rep.val_loss.front();
  for (double v : rep.val_loss) best = std::min(best, v);
  INFO("best validation loss " << best);
  CHECK(best < 1e-6);
  CHECK(rep.train_loss.back() < rep.train_loss.front());

  const auto [m2, rep2] = train_one(ds, kToy, cfg, 17);
  CHECK(m2.flatten() == m.flatten());
  CHECK(report_to_json(rep2).dump() == report_to_json(rep).dump());
}

TEST_CASE("train_ensemble: member seeds and the single-member case") {
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 50; ++i) seeds.insert(member_seed(42, i));
  CHECK(seeds.size() == 50);

  const SparseDataset ds = harmonic_dataset(40, 4);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.ensemble_size = 1;
  cfg.master_seed = 42;
  const auto ens = train_ensemble(ds, kToy, cfg);
  REQUIRE(ens.size() == 1);
  REQUIRE(ens[0].model);
  const auto [m, rep] = train_one(ds, kToy, cfg, member_seed(42, 0));
  CHECK(ens[0].model->flatten() == m.flatten());
}

TEST_CASE("adam optimizer path trains with mini-batches") {
  const SparseDataset ds = harmonic_dataset(80, 5);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.adam.lr = 1e-2;
  cfg.batch_size = 16;
  cfg.epochs = 30;
  const auto [m, rep] = train_one(ds, kToy, cfg, 3);
  CHECK(rep.train_loss.size() == 30);
  CHECK(rep.train_loss.back() < rep.train_loss.front());
}

TEST_CASE("loss curve CSV and report JSON") {
  TrainReport r;
  r.train_loss = {1.0, 0.5};
  r.val_loss = {1.5, std::numeric_limits<double>::infinity()};
  r.wall_time_s = 3.0;
  const std::string csv = loss_curve_csv(r);
  CHECK(csv.rfind("epoch,train_loss,val_loss\n", 0) == 0);
  const auto j = report_to_json(r);
  CHECK(j.at("val_loss")[1].is_null());
  CHECK_FALSE(j.contains("wall_time_s"));
}
