#include "hamlearn/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <regex>
#include <sstream>

#include "hamlearn/error.hpp"
#include "hamlearn/evaluate.hpp"
#include "hamlearn/io.hpp"
#include "hamlearn/symreg.hpp"
#include "hamlearn/theory.hpp"

namespace hamlearn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

json lambdas_json(const std::vector<Vector>& ls) {
  json out = json::array();
  for (const auto& l : ls) out.push_back(to_std(l));
  return out;
}

// Collects the files a command writes and emits its manifest.
class Outputs {
 public:
  Outputs(const RunConfig& cfg, std::string command, CommandResult& res)
      : cfg_(cfg), command_(std::move(command)), res_(res), hash_(config_hash(cfg)) {}

  const std::string& hash() const { return hash_; }
  fs::path root() const { return cfg_.output_dir; }

  void write(const std::string& rel, const std::string& content) {
    write_text_file(root() / rel, content);
    res_.files[rel] = hash_hex(content);
  }
  void write(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }

  // Results JSON always names its configuration.
  json stamped(json j) const {
    j["config_hash"] = hash_;
    return j;
  }

  void manifest(const std::string& produces, json extra = json::object()) {
    json m = std::move(extra);
    m["command"] = command_;
    m["produces"] = produces;
    m["config_hash"] = hash_;
    m["seed"] = cfg_.seed;
    m["seed_source"] = cfg_.seed_from_env ? "HAMLEARN_SEED" : "config";
    m["family"] = family_name(cfg_.data.family);
    m["files"] = res_.files;
    if (res_.checked) {
      m["check"] = {{"passed", res_.check_failures.empty()}, {"failures", res_.check_failures}};
    }
    write_text_file(root() / (command_ + "_manifest.json"), m.dump(2) + "\n");
  }

 private:
  const RunConfig& cfg_;
  std::string command_;
  CommandResult& res_;
  std::string hash_;
};

void fail(CommandResult& res, const std::string& msg) { res.check_failures.push_back(msg); }

std::string fmt(double x) {
  std::ostringstream s;
  s << std::setprecision(6) << x;
  return s.str();
}

std::string lambda_label(const Vector& l) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < l.size(); ++i) s += (i ? ", " : "") + fmt(l[i]);
  return s + ")";
}

fs::path models_dir_of(const RunConfig& cfg) {
  return cfg.evaluate.models_dir.empty() ? cfg.output_dir / "models" : fs::path(cfg.evaluate.models_dir);
}

// Trained members, or the analytic system in oracle mode.
struct PredictorSet {
  std::vector<AsrnnModel> models;
  std::vector<ModelForces> forces;
  std::optional<AnalyticForces> oracle;
  std::vector<Predictor> predictors;
};

void load_predictors(PredictorSet& set, const RunConfig& cfg, const fs::path& dir, std::ostream& log) {
  if (cfg.evaluate.oracle) {
    set.oracle.emplace(cfg.data.family);
    set.predictors = {Predictor{&*set.oracle, cfg.evaluate.oracle_dt}};
    log << "using analytic forces (oracle), dt=" << cfg.evaluate.oracle_dt << "\n";
    return;
  }
  set.models = load_models(dir);
  for (const auto& m : set.models)
    if (m.dim() != family_dim(cfg.data.family) || m.lambda_dim() != family_lambda_dim(cfg.data.family))
      throw ConfigError(dir.string() + ": model dimensions do not match family " + family_name(cfg.data.family));
  set.forces = forces_of(set.models);
  set.predictors = predictors_of(set.forces, set.models);
  log << "loaded " << set.models.size() << " model(s) from " << dir.string() << "\n";
}

bool is_training_lambda(const RunConfig& cfg, const Vector& l) {
  for (const auto& t : cfg.data.lambdas)
    if ((t - l).cwiseAbs().maxCoeff() < 1e-12) return true;
  return false;
}

std::vector<Vector> sweep_grid(const RunConfig& cfg) {
  const auto& e = cfg.evaluate;
  if (!e.grid.empty()) return e.grid;
  const auto n_a = static_cast<std::size_t>(e.axis_alpha[2]);
  const auto ax = linspace(e.axis_alpha[0], e.axis_alpha[1], n_a);
  if (family_lambda_dim(cfg.data.family) == 2)
    return lambda_grid(ax, linspace(e.axis_beta[0], e.axis_beta[1], static_cast<std::size_t>(e.axis_beta[2])));
  std::vector<Vector> out;
  for (double a : ax) out.push_back(Vector::Constant(1, a));
  return out;
}

double finite_mean(const SweepGrid& g, std::size_t* n_nan = nullptr) {
  double sum = 0.0;
  std::size_t n = 0, bad = 0;
  for (const auto& c : g.cells) {
    if (std::isfinite(c.mean_pct_err)) {
      sum += c.mean_pct_err;
      ++n;
    } else {
      ++bad;
    }
  }
  if (n_nan) *n_nan = bad;
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

json percentiles_json(const Percentiles& p) {
  return {{"mean", p.mean}, {"median", p.median}, {"p25", p.p25}, {"p75", p.p75}};
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"generate", "train", "predict", "sweep", "symreg", "verify-theory"};
  return names;
}

std::vector<AsrnnModel> load_models(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": models directory not found");
  static const std::regex pat(R"(member_(\d+)\.json)");
  std::vector<std::pair<long, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pat)) found.emplace_back(std::stol(m[1]), entry.path());
  }
  if (found.empty()) throw IoError(dir.string() + ": no member_<i>.json checkpoints");
  std::sort(found.begin(), found.end());
  std::vector<AsrnnModel> models;
  for (const auto& [i, path] : found) {
    try {
      models.push_back(model_from_json(json::parse(read_text_file(path))));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ": " + e.what());
    } catch (const IoError& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }
  return models;
}

CommandResult cmd_generate(const RunConfig& cfg, bool check, std::ostream& log) {
  CommandResult res;
  Outputs out(cfg, "generate", res);
  const WindowCorpus corpus = make_window_corpus(cfg.data);
  const SparseDataset ds = sparsify(corpus, cfg.data.seed);
  log << "generate: " << ds.samples.size() << " samples over " << cfg.data.lambdas.size() << " parameter values, "
      << "signal_std=" << fmt(ds.signal_std) << ", sigma_inf=" << fmt(ds.sigma_inf) << "\n";
  out.write("dataset.json", dataset_to_string(ds));

  json noise;
  if (cfg.data.noise.disabled()) {
    noise = {{"disabled", true}};
  } else {
    noise = {{"disabled", false}, {"tau", cfg.data.noise.tau}, {"sigma_inf", ds.sigma_inf}};
    if (cfg.data.noise.nsr) noise["nsr"] = *cfg.data.noise.nsr;
  }
  if (check) {
    res.checked = true;
    const std::size_t expected = cfg.data.lambdas.size() * cfg.data.windows_per_lambda;
    if (ds.samples.size() != expected)
      fail(res, "sample count " + std::to_string(ds.samples.size()) + " != " + std::to_string(expected));
    for (const auto& s : ds.samples) {
      if (!s.z0.q.allFinite() || !s.z0.p.allFinite() || !s.z_obs.q.allFinite() || !s.z_obs.p.allFinite()) {
        fail(res, "non-finite sample");
        break;
      }
      if (s.k < 1 || static_cast<std::size_t>(s.k) >= cfg.data.window_len) {
        fail(res, "offset k out of range");
        break;
      }
    }
  }
  out.manifest("training data",
               {{"samples", ds.samples.size()},
                {"data_seed", ds.seed},
                {"signal_std", ds.signal_std},
                {"noise", noise},
                {"noise_initial", cfg.data.noise_initial},
                {"dt", cfg.data.dt},
                {"window_len", cfg.data.window_len},
                {"lambdas", lambdas_json(cfg.data.lambdas)}});
  return res;
}

CommandResult cmd_train(const RunConfig& cfg, bool check, std::ostream& log) {
  CommandResult res;
  Outputs out(cfg, "train", res);
  const WindowCorpus corpus = make_window_corpus(cfg.data);
  log << "train: " << cfg.train.ensemble_size << " member(s), " << cfg.train.epochs << " epoch(s), "
      << corpus.windows.size() << " windows\n";

  json summary = json::array();
  std::size_t failed = 0;
  // Members are written as they finish so long runs leave partial results.
  auto record = [&](std::size_t i, const EnsembleMember& mem) {
    const std::string tag = "member_" + std::to_string(i);
    TrainReport rep = mem.report;
    double best_val = std::numeric_limits<double>::infinity();
    for (double v : rep.val_loss)
      if (std::isfinite(v)) best_val = std::min(best_val, v);
    json row = {{"member", i}, {"seed", rep.member_seed}};
    if (mem.model) {
      rep.checkpoint_path = "models/" + tag + ".json";
      json meta = {{"family", family_name(cfg.data.family)},
                   {"training_lambdas", lambdas_json(cfg.data.lambdas)},
                   {"config_hash", out.hash()},
                   {"best_epoch", rep.best_epoch}};
      out.write(rep.checkpoint_path, model_to_json(*mem.model, rep.member_seed, meta));
      row["checkpoint"] = rep.checkpoint_path;
    } else {
      ++failed;
      row["error"] = mem.error;
      log << "  " << tag << " failed: " << mem.error << "\n";
    }
    json rj = report_to_json(rep);
    if (!mem.error.empty()) rj["error"] = mem.error;
    out.write("reports/" + tag + ".json", out.stamped(rj));
    out.write("loss/" + tag + ".csv", loss_curve_csv(rep));
    row["best_epoch"] = rep.best_epoch;
    row["best_val_loss"] = std::isfinite(best_val) ? json(best_val) : json(nullptr);
    row["final_train_loss"] = rep.train_loss.empty() ? json(nullptr) : json(rep.train_loss.back());
    row["reinitializations"] = rep.reinitializations;
    row["adam_rescues"] = rep.adam_rescues;
    summary.push_back(row);
    if (mem.model)
      log << "  " << tag << ": best val " << fmt(best_val) << " at epoch " << rep.best_epoch << "\n";
    if (check) {
      res.checked = true;
      if (!mem.model)
        fail(res, tag + " failed to train");
      else if (cfg.train.epochs > 0 && !(best_val <= cfg.check.max_val_loss))
        fail(res, tag + " validation loss " + fmt(best_val) + " > " + fmt(cfg.check.max_val_loss));
    }
    log.flush();
  };
  const auto members = train_ensemble(corpus, cfg.arch, cfg.train, record);
  out.write("train_summary.json", out.stamped({{"members", summary}, {"failed", failed}}));
  out.manifest("trained ensemble", {{"members", members.size()}, {"failed", failed}});
  return res;
}

CommandResult cmd_predict(const RunConfig& cfg, bool check, std::ostream& log) {
  CommandResult res;
  Outputs out(cfg, "predict", res);
  PredictorSet set;
  load_predictors(set, cfg, models_dir_of(cfg), log);
  const auto& ev = cfg.evaluate;
  const std::vector<Vector> lambdas = ev.predict_lambdas.empty() ? cfg.symreg.lambdas : ev.predict_lambdas;
  const SystemFamily family = cfg.data.family;
  const int d = family_dim(family);

  std::ostringstream csv;
  csv << std::setprecision(17);
  csv << "lambda_index,member,traj,step";
  for (int i = 1; i <= d; ++i) csv << ",q" << i;
  for (int i = 1; i <= d; ++i) csv << ",p" << i;
  csv << ",energy_true,eps,energy_learned\n";

  json per_lambda = json::array();
  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    const Vector& lam = lambdas[li];
    const SystemSpec spec = SystemSpec::from_lambda(family, lam);
    const std::uint64_t seed = derive_seed(cfg.seed, {0x50524544, li});
    const auto summary = energy_error_summary(set.predictors, family, lam, ev.energy, ev.n_traj, ev.horizon, seed);

    double max_h_std = 0.0, sum_h_std = 0.0;
    std::size_t n_h = 0;
    for (std::size_t mi = 0; mi < set.predictors.size(); ++mi) {
      for (std::size_t j = 0; j < ev.n_traj; ++j) {
        // Same initial states as the summary above.
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(j)});
        const PhaseState z0 = sample_initial_condition(spec, std::max(ev.energy, default_e_max(family)), ev.energy, rng);
        const auto pb = rollout_batch(*set.predictors[mi].forces, PhaseBatch{z0.q, z0.p}, lam,
                                      set.predictors[mi].dt, ev.horizon);
        Trajectory traj;
        traj.dt = set.predictors[mi].dt;
        traj.lambda = lam;
        bool finite = true;
        for (const auto& b : pb) {
          traj.states.push_back(PhaseState{b.q.col(0), b.p.col(0)});
          finite = finite && b.q.allFinite() && b.p.allFinite();
        }
        const double h0 = hamiltonian(spec, z0);
        std::vector<double> learned;
        if (!set.models.empty() && finite) {
          const auto drift = learned_energy_drift(set.models[mi], traj);
          learned = drift.series;
          max_h_std = std::max(max_h_std, drift.std);
          sum_h_std += drift.std;
          ++n_h;
        }
        for (std::size_t n = 0; n < traj.states.size(); ++n) {
          const auto& s = traj.states[n];
          const double h = hamiltonian(spec, s);
          csv << li << "," << mi << "," << j << "," << n;
          for (int i = 0; i < d; ++i) csv << "," << s.q[i];
          for (int i = 0; i < d; ++i) csv << "," << s.p[i];
          csv << "," << h << "," << std::abs((h0 - h) / h0) << ",";
          if (n < learned.size()) csv << learned[n];
          csv << "\n";
        }
      }
    }
    json row = {{"lambda", to_std(lam)},
                {"training", is_training_lambda(cfg, lam)},
                {"n_trajectories", summary.n_trajectories},
                {"n_diverged", summary.n_diverged},
                {"percent_error", summary.trajectory_eps.empty() ? json(nullptr) : percentiles_json(summary.percent)}};
    if (n_h) {
      row["learned_energy_std_max"] = max_h_std;
      row["learned_energy_std_mean"] = sum_h_std / static_cast<double>(n_h);
    }
    per_lambda.push_back(row);
    log << "predict λ=" << lambda_label(lam) << ": mean ε " << fmt(summary.percent.mean) << "%, diverged "
        << summary.n_diverged << "/" << summary.n_trajectories;
    if (n_h) log << ", max std(H_θ) " << fmt(max_h_std);
    log << "\n";

    if (check) {
      res.checked = true;
      if (summary.n_diverged > 0)
        fail(res, "λ=" + lambda_label(lam) + ": " + std::to_string(summary.n_diverged) + " diverged trajectories");
      if (!summary.trajectory_eps.empty() && !(summary.percent.mean < cfg.check.max_mean_pct_err))
        fail(res, "λ=" + lambda_label(lam) + ": mean error " + fmt(summary.percent.mean) + "% >= " +
                      fmt(cfg.check.max_mean_pct_err) + "%");
      if (n_h && !(max_h_std < cfg.check.max_energy_std))
        fail(res, "λ=" + lambda_label(lam) + ": std(H_θ) " + fmt(max_h_std) + " >= " + fmt(cfg.check.max_energy_std));
    }
  }
  out.write("predictions.csv", csv.str());
  out.write("predict_summary.json",
            out.stamped({{"energy", ev.energy}, {"horizon", ev.horizon}, {"oracle", ev.oracle}, {"lambdas", per_lambda}}));
  out.manifest("predicted trajectories and energy error along them");
  return res;
}

CommandResult cmd_sweep(const RunConfig& cfg, bool check, std::ostream& log) {
  CommandResult res;
  Outputs out(cfg, "sweep", res);
  const auto& ev = cfg.evaluate;
  const SystemFamily family = cfg.data.family;
  const auto grid = sweep_grid(cfg);
  const std::uint64_t seed = derive_seed(cfg.seed, {0x5357454550});
  json summary = json::object();

  PredictorSet set;
  load_predictors(set, cfg, models_dir_of(cfg), log);
  const SweepGrid g = parameter_sweep(set.predictors, family, grid, cfg.data.lambdas, ev.energy, ev.n_traj,
                                      ev.horizon, seed);
  out.write("sweep.csv", sweep_csv(g));
  std::size_t n_nan = 0, n_div = 0;
  const double mean = finite_mean(g, &n_nan);
  for (const auto& c : g.cells) n_div += c.n_diverged;
  summary["grid"] = {{"cells", g.cells.size()},
                     {"mean_pct_err", std::isfinite(mean) ? json(mean) : json(nullptr)},
                     {"cells_all_diverged", n_nan},
                     {"diverged_trajectories", n_div}};
  log << "sweep: " << g.cells.size() << " cells, mean ε " << fmt(mean) << "%, diverged trajectories " << n_div
      << "\n";
  if (check) {
    res.checked = true;
    if (!(mean < cfg.check.max_mean_pct_err))
      fail(res, "grid mean error " + fmt(mean) + "% >= " + fmt(cfg.check.max_mean_pct_err) + "%");
  }

  // Each noise condition pools every grid cell of its own ensemble.
  if (!ev.noise_runs.empty()) {
    std::vector<NoiseCondition> conds;
    json rows = json::array();
    for (const auto& run : ev.noise_runs) {
      PredictorSet ns;
      RunConfig sub = cfg;
      sub.evaluate.oracle = false;
      load_predictors(ns, sub, run.models_dir, log);
      NoiseCondition c{run.nsr, run.tau, {}};
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto s = energy_error_summary(ns.predictors, family, grid[i], ev.energy, ev.n_traj, ev.horizon,
                                            derive_seed(seed, {i}));
        c.summary.trajectory_eps.insert(c.summary.trajectory_eps.end(), s.trajectory_eps.begin(),
                                        s.trajectory_eps.end());
        c.summary.n_trajectories += s.n_trajectories;
        c.summary.n_diverged += s.n_diverged;
      }
      c.summary.horizon = ev.horizon;
      if (!c.summary.trajectory_eps.empty()) {
        std::vector<double> pct;
        for (double e : c.summary.trajectory_eps) pct.push_back(100.0 * e);
        c.summary.percent = summarize(pct);
      } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        c.summary.percent = {nan, nan, nan, nan};
      }
      rows.push_back({{"nsr", run.nsr},
                      {"tau", run.tau},
                      {"models_dir", run.models_dir},
                      {"n_trajectories", c.summary.n_trajectories},
                      {"n_diverged", c.summary.n_diverged},
                      {"percent_error", percentiles_json(c.summary.percent)}});
      log << "noise nsr=" << run.nsr << " tau=" << run.tau << ": median ε " << fmt(c.summary.percent.median)
          << "%\n";
      conds.push_back(std::move(c));
    }
    out.write("noise_sweep.csv", noise_sweep_summary(conds));
    summary["noise_runs"] = rows;
  }

  if (family == SystemFamily::DoubleWell && !set.models.empty()) {
    const auto q_grid = linspace(ev.dw_q_range[0], ev.dw_q_range[1], static_cast<std::size_t>(ev.dw_q_range[2]));
    const auto reports = double_well_diagnostic(set.models, ev.dw_alphas, q_grid);
    out.write("double_well.csv", double_well_csv(reports));
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& l : cfg.data.lambdas) {
      lo = std::min(lo, l[0]);
      hi = std::max(hi, l[0]);
    }
    double worst = 0.0;
    json minima = json::array();
    for (const auto& r : reports) {
      const bool inside = r.alpha >= lo - 1e-12 && r.alpha <= hi + 1e-12;
      if (inside) worst = std::max(worst, r.max_abs_residual);
      minima.push_back({{"member", r.member}, {"alpha", r.alpha}, {"inside_training_range", inside},
                        {"max_abs_residual", r.max_abs_residual}, {"learned_minima", r.learned_minima},
                        {"analytic_minima", r.analytic_minima}});
    }
    summary["double_well"] = {{"max_residual_in_training_range", worst}, {"reports", minima}};
    log << "double well: max aligned residual inside training range " << fmt(worst) << "\n";
    if (check && !(worst < cfg.check.max_dw_residual))
      fail(res, "double-well residual " + fmt(worst) + " >= " + fmt(cfg.check.max_dw_residual));
  }

  out.write("sweep_summary.json", out.stamped(summary));
  out.manifest("energy error across the parameter grid");
  return res;
}

CommandResult cmd_symreg(const RunConfig& cfg, bool check, std::ostream& log) {
  CommandResult res;
  Outputs out(cfg, "symreg", res);
  const auto& sy = cfg.symreg;
  const SystemFamily family = cfg.data.family;
  const bool hh = family == SystemFamily::HenonHeiles;
  const bool morse_fit = family == SystemFamily::Morse && sy.hamiltonian;

  std::vector<AsrnnModel> models;
  if (!cfg.evaluate.oracle) {
    models = load_models(models_dir_of(cfg));
    log << "loaded " << models.size() << " model(s)\n";
  }
  const AnalyticForces oracle(family);
  res.checked = check;

  std::ostringstream csv;
  csv << std::setprecision(17);
  csv << "lambda_index,member,alpha_hat,beta_hat,support_exact\n";
  json fits = json::array();
  json table = json::array();

  for (std::size_t li = 0; li < sy.lambdas.size(); ++li) {
    const Vector& lam = sy.lambdas[li];
    const bool seen = is_training_lambda(cfg, lam);
    const double tol = seen ? cfg.check.param_rel_tol : 2.0 * cfg.check.param_rel_tol;
    const double truth = lam[0];
    const std::string where = "λ=" + lambda_label(lam);
    EomSampling es = sy.eom;
    es.seed = derive_seed(sy.eom.seed, {li});
    HamiltonianSampling hs = sy.h_sampling;
    hs.seed = derive_seed(sy.h_sampling.seed, {li});
    StlsqOptions hopt = sy.stlsq;
    hopt.protect_constant = true;

    // Analytic forces first: the regression itself must be exact there.
    const SparseFit ofit = recover_eom(oracle, cfg.data.dt, family, lam, es, sy.degree, sy.stlsq);
    json entry = {{"lambda", to_std(lam)}, {"training", seen}, {"oracle", fit_to_json(ofit)}};
    auto row_of = [&](const std::string& who, const SparseFit& f) {
      csv << li << "," << who << ",";
      auto p = [&](const char* k) {
        auto it = f.params.find(k);
        if (it != f.params.end()) csv << it->second;
      };
      p("alpha_hat");
      csv << ",";
      p("beta_hat");
      csv << ",";
      p("support_exact");
      csv << "\n";
    };
    row_of("oracle", ofit);
    if (check && hh) {
      if (ofit.params.at("support_exact") != 1.0) fail(res, where + ": oracle support not exact");
      if (std::abs(ofit.params.at("alpha_hat") - lam[0]) > 1e-8 || std::abs(ofit.params.at("beta_hat") - lam[1]) > 1e-8)
        fail(res, where + ": oracle coefficients off by more than 1e-8");
    }
    if (morse_fit) {
      const auto of = fit_hamiltonian_polys(oracle, cfg.data.dt, energy_model_of(SystemSpec::from_lambda(family, lam)),
                                            family, lam, hs, sy.h_degree, hopt, sy.q_center);
      entry["oracle_potential"] = fit_to_json(of.potential);
      entry["oracle_alpha_hat"] = extract_morse_alpha(of.potential);
    }

    std::vector<double> a_hat, b_hat, m_alpha;
    json members = json::array();
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      const SparseFit f = recover_eom(models[mi], family, lam, es, sy.degree, sy.stlsq);
      row_of(std::to_string(mi), f);
      json mj = {{"member", mi}, {"eom", fit_to_json(f)}};
      if (hh) {
        a_hat.push_back(f.params.at("alpha_hat"));
        b_hat.push_back(f.params.at("beta_hat"));
        if (check && seen && f.params.at("support_exact") != 1.0)
          fail(res, where + ": member " + std::to_string(mi) + " support differs from the expected monomials");
      }
      if (morse_fit) {
        const auto hf = fit_hamiltonian_polys(models[mi], family, lam, hs, sy.h_degree, hopt, sy.q_center);
        mj["kinetic"] = fit_to_json(hf.kinetic);
        mj["potential"] = fit_to_json(hf.potential);
        const auto i1 = hf.potential.lib.index_of(std::vector<int>{1});
        const auto i2 = hf.potential.lib.index_of(std::vector<int>{2});
        const double c1 = hf.potential.targets[0].coef[static_cast<Eigen::Index>(*i1)];
        const double c2 = hf.potential.targets[0].coef[static_cast<Eigen::Index>(*i2)];
        mj["c1"] = c1;
        mj["c2"] = c2;
        try {
          const double a = extract_morse_alpha(hf.potential);
          mj["alpha_hat"] = a;
          m_alpha.push_back(a);
        } catch (const Error& e) {
          mj["alpha_hat"] = nullptr;
          mj["error"] = e.what();
          if (check) fail(res, where + ": member " + std::to_string(mi) + ": " + e.what());
        }
        if (check && !(std::abs(c1) < 0.05 * std::abs(c2)))
          fail(res, where + ": member " + std::to_string(mi) + " linear coefficient not negligible");
      }
      members.push_back(mj);
    }
    entry["members"] = members;

    auto mean_std = [](const std::vector<double>& xs) {
      double m = 0.0, v = 0.0;
      for (double x : xs) m += x;
      m /= static_cast<double>(xs.size());
      for (double x : xs) v += (x - m) * (x - m);
      return std::pair{m, std::sqrt(v / static_cast<double>(xs.size()))};
    };
    json trow = {{"lambda", to_std(lam)}, {"training", seen}};
    auto judge = [&](const char* name, const std::vector<double>& xs, double target) {
      if (xs.empty()) return;
      const auto [m, s] = mean_std(xs);
      trow[std::string(name) + "_mean"] = m;
      trow[std::string(name) + "_std"] = s;
      log << where << (seen ? " (seen)" : " (unseen)") << ": " << name << " = " << fmt(m) << " ± " << fmt(s)
          << " (true " << fmt(target) << ")\n";
      if (check && !(std::abs(m - target) <= tol * std::abs(target)))
        fail(res, where + ": " + name + " mean " + fmt(m) + " outside " + fmt(100 * tol) + "% of " + fmt(target));
    };
    if (hh) {
      judge("alpha_hat", a_hat, lam[0]);
      judge("beta_hat", b_hat, lam[1]);
    }
    if (morse_fit) judge("morse_alpha_hat", m_alpha, truth);
    table.push_back(trow);
    fits.push_back(entry);
  }
  out.write("symreg.csv", csv.str());
  out.write("symreg_table.json", out.stamped({{"rows", table}}));
  out.write("symreg_fits.json", out.stamped({{"threshold", sy.stlsq.threshold}, {"degree", sy.degree}, {"fits", fits}}));
  out.manifest("recovered equations of motion and coefficients");
  return res;
}

CommandResult cmd_verify_theory(const RunConfig& cfg, bool check, std::ostream& log) {
  CommandResult res;
  Outputs out(cfg, "verify-theory", res);
  const auto& th = cfg.theory;
  const auto& ck = cfg.check;
  res.checked = check;
  const AsrnnModel m = tiny_model(th.dt, th.model_seed);
  const Vector lam = Vector::Constant(1, 0.5);
  const Vector z0 = (Vector(2) << 0.6, -0.3).finished();
  const auto clean = predict(m, PhaseState{z0.head(1), z0.tail(1)}, lam, th.n_steps);
  const Vector zn = (Vector(2) << clean.states.back().q, clean.states.back().p).finished();
  const double sigma = th.sigmas.empty() ? th.sigma_inf : th.sigmas.back();
  json summary = json::object();

  for (const auto& c : th.checks) {
    const std::uint64_t seed = derive_seed(cfg.seed, {0x544845, fnv1a64(c)});
    if (c == "fd_variance") {
      const auto rows = fd_variance_check(th.sigma_inf, th.tau, th.ds_list, th.fd_trials, seed);
      out.write("fd_variance.csv", fd_variance_csv(rows));
      double worst = 0.0;
      for (const auto& r : rows) worst = std::max(worst, std::abs(r.z));
      summary[c] = {{"max_abs_z", worst}, {"rows", rows.size()}};
      log << "fd_variance: max |z| " << fmt(worst) << " over " << rows.size() << " spacings\n";
      if (check && !(worst <= ck.max_abs_z)) fail(res, "fd_variance: max |z| " + fmt(worst));
    } else if (c == "bias") {
      const auto r = bias_scaling_fit(asrnn_batch_gradient(m, lam, th.n_steps), z0, zn, th.n_steps, th.tau, th.dt,
                                      th.sigmas, th.mc, seed);
      out.write("bias_scaling.csv", bias_scaling_csv(r));
      summary[c] = {{"slope", r.slope}, {"intercept", r.intercept}, {"inconclusive", r.inconclusive}};
      log << "bias: log-log slope " << fmt(r.slope) << (r.inconclusive ? " (inconclusive)" : "") << "\n";
      if (check && (r.inconclusive || r.slope < ck.slope_lo || r.slope > ck.slope_hi))
        fail(res, "bias: slope " + fmt(r.slope) + " outside [" + fmt(ck.slope_lo) + ", " + fmt(ck.slope_hi) + "]");
    } else if (c == "decay") {
      const auto r = correlation_decay_check(m, z0, zn, lam, th.n_list, th.tau, sigma, th.mc, seed);
      out.write("correlation_decay.csv", correlation_decay_csv(r));
      summary[c] = {{"fitted_rate", r.fitted_rate},
                    {"expected_rate", r.expected_rate},
                    {"relative_error", r.relative_error},
                    {"inconclusive", r.inconclusive}};
      log << "decay: rate " << fmt(r.fitted_rate) << " vs " << fmt(r.expected_rate) << " (rel. err "
          << fmt(r.relative_error) << ")" << (r.inconclusive ? " inconclusive" : "") << "\n";
      if (check && (r.inconclusive || !(r.relative_error <= ck.decay_rel_tol)))
        fail(res, "decay: relative error " + fmt(r.relative_error));
    } else if (c == "ahnn") {
      const auto r = ahnn_bias_scaling(m, z0, lam, th.ds_list, th.tau, sigma, th.mc, seed);
      out.write("ahnn_scaling.csv", ahnn_scaling_csv(r));
      double worst = 0.0;
      for (const auto& q : r.ratios) worst = std::max(worst, std::abs(q.z));
      for (const auto& q : r.rows) worst = std::max(worst, std::abs(q.z));
      summary[c] = {{"fitted_k", r.fitted_k}, {"max_abs_z", worst}, {"inconclusive", r.inconclusive}};
      log << "ahnn: fitted K " << fmt(r.fitted_k) << ", max |z| " << fmt(worst)
          << (r.inconclusive ? " (inconclusive: no resolvable gap)" : "") << "\n";
      if (check && (r.inconclusive || !(worst <= ck.max_abs_z)))
        fail(res, std::string("ahnn: ") + (r.inconclusive ? "gap not resolved from zero" : "max |z| " + fmt(worst)));
    }
  }
  out.write("theory_summary.json", out.stamped(summary));
  out.manifest("numerical checks of the noise-bias analysis");
  return res;
}

int run_cli(const CliInvocation& inv, std::ostream& log) {
  using Fn = CommandResult (*)(const RunConfig&, bool, std::ostream&);
  static const std::map<std::string, Fn> table{{"generate", cmd_generate}, {"train", cmd_train},
                                               {"predict", cmd_predict},   {"sweep", cmd_sweep},
                                               {"symreg", cmd_symreg},     {"verify-theory", cmd_verify_theory}};
  RunConfig cfg;
  try {
    const auto it = table.find(inv.command);
    if (it == table.end()) throw ConfigError("unknown command '" + inv.command + "'");
    if (inv.threads < 1) throw ConfigError("--threads must be >= 1");
    std::optional<std::uint64_t> seed;
    if (const char* env = std::getenv("HAMLEARN_SEED"); env && *env) {
      const std::string s = env;
      if (s.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError("HAMLEARN_SEED must be a non-negative integer, got '" + s + "'");
      try {
        seed = std::stoull(s);
      } catch (const std::exception&) {
        throw ConfigError("HAMLEARN_SEED out of range: '" + s + "'");
      }
      log << "HAMLEARN_SEED=" << *seed << " overrides the config seed\n";
    }
    cfg = load_run_config(inv.config, seed);
    if (inv.out) cfg.output_dir = *inv.out;

    const CommandResult r = it->second(cfg, inv.check, log);
    log << inv.command << ": wrote " << r.files.size() << " file(s) to " << cfg.output_dir.string() << "\n";
    if (inv.check) {
      for (const auto& f : r.check_failures) log << "CHECK FAILED: " << f << "\n";
      if (!r.check_failures.empty()) return kExitCheck;
      log << "all checks passed\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    log << inv.command << ": configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    log << inv.command << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace hamlearn
