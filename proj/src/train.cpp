#include "hamlearn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "hamlearn/error.hpp"
#include "hamlearn/io.hpp"

namespace hamlearn {

void TrainConfig::validate() const {
  if (ensemble_size < 1) throw ConfigError("ensemble_size must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in [0, 1)");
  if (optimizer == OptimizerKind::Lbfgs && batch_size != 0)
    throw ConfigError("mini-batches are only supported with adam (lbfgs needs a deterministic objective)");
  if (loss.chunk == 0) throw ConfigError("loss chunk must be positive");
  if (max_reinitializations < 0) throw ConfigError("max_reinitializations must be >= 0");
  if (lbfgs.history < 1) throw ConfigError("lbfgs history must be >= 1");
  if (!(adam.lr > 0.0)) throw ConfigError("adam lr must be positive");
}

std::pair<std::vector<SparseSample>, std::vector<SparseSample>> split_train_validation(
    const std::vector<SparseSample>& samples, double validation_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, {0x53504c4954});
  // Fisher–Yates with our own index draws: std::shuffle's algorithm is
  // implementation-defined.
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(samples.size())));
  if (validation_fraction > 0.0 && n_val == 0 && samples.size() > 1) n_val = 1;
  std::pair<std::vector<SparseSample>, std::vector<SparseSample>> out;
  for (std::size_t i = 0; i < idx.size(); ++i) (i < n_val ? out.second : out.first).push_back(samples[idx[i]]);
  return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_loss(const AsrnnModel& m, const std::vector<SparseSample>& batch, const LossOptions& opt) {
  if (batch.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    const double l = asrnn_loss(m, batch, opt);
    return std::isfinite(l) ? l : kInf;
  } catch (const BlowupError&) {
    return kInf;
  }
}

// One pass of Adam over consecutive mini-batches. Throws BlowupError.
void adam_epoch(AsrnnModel& m, Vector& x, Adam& adam, const std::vector<SparseSample>& train, std::size_t batch,
                const LossOptions& opt) {
  const std::size_t b = batch == 0 ? train.size() : batch;
  for (std::size_t begin = 0; begin < train.size(); begin += b) {
    const std::vector<SparseSample> part(train.begin() + static_cast<std::ptrdiff_t>(begin),
                                         train.begin() + static_cast<std::ptrdiff_t>(std::min(train.size(), begin + b)));
    m.unflatten(x);
    const LossGradient g = asrnn_loss_gradient(m, part, opt);
    const Vector flat = g.flatten();
    if (!std::isfinite(g.loss) || !flat.allFinite()) throw BlowupError(0);
    adam.step(x, flat);
  }
  m.unflatten(x);
}

}  // namespace

std::pair<AsrnnModel, TrainReport> train_one(const SparseDataset& ds, const Architecture& arch,
                                             const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  arch.kinetic.validate();
  arch.potential.validate();
  const int d = family_dim(ds.family);
  if (arch.kinetic.input_dim() != d) throw ShapeError("kinetic network input", d, arch.kinetic.input_dim());
  if (arch.potential.input_dim() != d + family_lambda_dim(ds.family))
    throw ShapeError("potential network input", d + family_lambda_dim(ds.family), arch.potential.input_dim());
  if (!(ds.dt > 0.0)) throw ContractError("dataset dt must be positive");
  if (ds.samples.empty()) throw ContractError("cannot train on an empty dataset");

  const auto t_start = std::chrono::steady_clock::now();
  auto [train, val] = split_train_validation(ds.samples, cfg.validation_fraction, derive_seed(seed, {0x5350}));
  if (train.empty()) throw ContractError("training split is empty");

  TrainReport report;
  report.member_seed = seed;
  auto log = [&](std::string msg) { report.log.push_back(std::move(msg)); };

  AsrnnModel model = AsrnnModel::init(arch.kinetic, arch.potential, ds.dt, seed);
  if (cfg.epochs == 0) {
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {model, report};
  }

  AsrnnModel work = model;
  auto objective = [&](const Vector& x, Vector& grad) {
    work.unflatten(x);
    const LossGradient g = asrnn_loss_gradient(work, train, cfg.loss);
    grad = g.flatten();
    return g.loss;
  };

  for (int attempt = 0;; ++attempt) {
    const std::uint64_t init_seed = attempt == 0 ? seed : derive_seed(seed, {0x5245, static_cast<std::uint64_t>(attempt)});
    model = AsrnnModel::init(arch.kinetic, arch.potential, ds.dt, init_seed);
    report.train_loss.clear();
    report.val_loss.clear();
    report.reinitializations = attempt;
    report.adam_rescues = 0;
    report.early_stop = false;

    Vector x = model.flatten();
    Vector best = x;
    double best_metric = val.empty() ? safe_loss(model, train, cfg.loss) : safe_loss(model, val, cfg.loss);
    report.best_epoch = 0;
    bool blew_up = false;

    try {
      std::optional<Lbfgs> solver;
      Adam adam(x.size(), cfg.adam);
      if (cfg.optimizer == OptimizerKind::Lbfgs) solver.emplace(objective, x, cfg.lbfgs);
      bool rescued_last = false;

      for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double train_loss;
        bool stop = false;
        if (solver) {
          const LbfgsStatus st = solver->step();
          if (st == LbfgsStatus::LineSearchFailed) {
            if (rescued_last) {
              log("epoch " + std::to_string(epoch) + ": line search failed again after adam rescue; stopping");
              stop = true;
            } else {
              log("epoch " + std::to_string(epoch) + ": line search failed; one adam epoch then lbfgs restart");
              Vector y = solver->x();
              Adam rescue(y.size(), cfg.adam);
              try {
                adam_epoch(work, y, rescue, train, cfg.loss.chunk, cfg.loss);
                solver->reset(y);
                ++report.adam_rescues;
              } catch (const Error& e) {
                log(std::string("adam rescue failed: ") + e.what() + "; stopping");
                stop = true;
              }
            }
            rescued_last = true;
          } else {
            rescued_last = false;
            if (st == LbfgsStatus::Converged) {
              log("epoch " + std::to_string(epoch) + ": gradient tolerance reached");
              stop = true;
            }
          }
          x = solver->x();
          train_loss = solver->f();
        } else {
          adam_epoch(work, x, adam, train, cfg.batch_size, cfg.loss);
          train_loss = safe_loss(work, train, cfg.loss);
          if (!std::isfinite(train_loss)) throw BlowupError(epoch);
        }

        model.unflatten(x);
        const double val_loss = val.empty() ? std::numeric_limits<double>::quiet_NaN() : safe_loss(model, val, cfg.loss);
        report.train_loss.push_back(train_loss);
        report.val_loss.push_back(val_loss);
        const double metric = val.empty() ? train_loss : val_loss;
        if (metric < best_metric) {
          best_metric = metric;
          best = x;
          report.best_epoch = epoch;
        }
        if (stop) {
          report.early_stop = epoch < cfg.epochs;
          break;
        }
      }
    } catch (const BlowupError& e) {
      blew_up = true;
      log("attempt " + std::to_string(attempt) + ": " + e.what());
    } catch (const TrainingError& e) {
      blew_up = true;
      log("attempt " + std::to_string(attempt) + ": " + e.what());
    }

    if (!blew_up) {
      model.unflatten(best);
      break;
    }
    if (attempt >= cfg.max_reinitializations) {
      report.diverged = true;
      throw TrainingError("training diverged after " + std::to_string(attempt) + " reinitializations (seed " +
                          std::to_string(seed) + ")");
    }
  }

  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {model, report};
}

std::uint64_t member_seed(std::uint64_t master_seed, std::size_t index) {
  return derive_seed(master_seed, {0x4d454d, static_cast<std::uint64_t>(index)});
}

namespace {

template <class DatasetFor>
std::vector<EnsembleMember> run_members(std::size_t n, const Architecture& arch, const TrainConfig& cfg,
                                        DatasetFor dataset_for, const MemberDone& done) {
  cfg.validate();
  std::vector<EnsembleMember> members(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = member_seed(cfg.master_seed, i);
    try {
      auto [m, r] = train_one(dataset_for(i, s), arch, cfg, s);
      members[i].model = std::move(m);
      members[i].report = std::move(r);
    } catch (const TrainingError& e) {
      members[i].report.member_seed = s;
      members[i].report.diverged = true;
      members[i].error = e.what();
    }
    if (done) done(i, members[i]);
  }
  if (std::none_of(members.begin(), members.end(), [](const EnsembleMember& m) { return m.model.has_value(); }))
    throw TrainingError("every ensemble member failed: " + members.front().error);
  return members;
}

}  // namespace

std::vector<EnsembleMember> train_ensemble(const SparseDataset& ds, const Architecture& arch,
                                           const TrainConfig& cfg, const MemberDone& done) {
  return run_members(
      cfg.ensemble_size, arch, cfg, [&](std::size_t, std::uint64_t) -> const SparseDataset& { return ds; }, done);
}

std::vector<EnsembleMember> train_ensemble(const WindowCorpus& corpus, const Architecture& arch,
                                           const TrainConfig& cfg, const MemberDone& done) {
  return run_members(
      cfg.ensemble_size, arch, cfg,
      [&](std::size_t, std::uint64_t s) { return sparsify(corpus, derive_seed(s, {0x534c494345})); }, done);
}

namespace {

nlohmann::json finite_or_null(const std::vector<double>& xs) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : xs) a.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
  return a;
}

}  // namespace

nlohmann::json report_to_json(const TrainReport& r) {
  nlohmann::json j;
  j["train_loss"] = finite_or_null(r.train_loss);
  j["val_loss"] = finite_or_null(r.val_loss);
  j["checkpoint"] = r.checkpoint_path;
  j["diverged"] = r.diverged;
  j["early_stop"] = r.early_stop;
  j["best_epoch"] = r.best_epoch;
  j["reinitializations"] = r.reinitializations;
  j["adam_rescues"] = r.adam_rescues;
  j["member_seed"] = r.member_seed;
  j["log"] = r.log;
  return j;
}

std::string loss_curve_csv(const TrainReport& r) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t i = 0; i < r.train_loss.size(); ++i) {
    out << (i + 1) << ',' << format_double(r.train_loss[i]) << ','
        << (i < r.val_loss.size() ? format_double(r.val_loss[i]) : std::string("nan")) << '\n';
  }
  return out.str();
}

}  // namespace hamlearn
