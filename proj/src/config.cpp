#include "hamlearn/config.hpp"

#include <set>

#include "hamlearn/error.hpp"
#include "hamlearn/io.hpp"

namespace hamlearn {

namespace {

using nlohmann::json;

// Typed access to one JSON object that remembers which keys were read, so
// anything left over is reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  T get(const std::string& key, T def) {
    if (!has(key)) return def;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  Section sub(const std::string& key) {
    static const json empty = json::object();
    return Section(has(key) ? j_.at(key) : empty, where(key));
  }

  std::vector<Vector> vectors(const std::string& key) {
    std::vector<Vector> out;
    if (!has(key)) return out;
    const auto rows = get<std::vector<std::vector<double>>>(key, {});
    for (const auto& r : rows) out.push_back(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size())));
    return out;
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError(path_ + ": unknown key '" + item.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void check_lambdas(const std::vector<Vector>& ls, SystemFamily family, const std::string& where) {
  for (const auto& l : ls)
    require(l.size() == family_lambda_dim(family),
            where + ": each parameter vector needs " + std::to_string(family_lambda_dim(family)) + " entries");
}

std::vector<double> axis_or(Section& s, const std::string& key, std::vector<double> def) {
  auto v = s.get<std::vector<double>>(key, def);
  require(v.size() == 3 && v[2] >= 1.0, s.where(key) + ": expected [lo, hi, n]");
  return v;
}

}  // namespace

Architecture default_architecture(SystemFamily family) {
  switch (family) {
    case SystemFamily::HenonHeiles:
      return {MlpSpec{{2, 30, 30, 30, 1}}, MlpSpec{{4, 30, 30, 30, 1}}};
    case SystemFamily::Morse:
    case SystemFamily::DoubleWell:
      return {MlpSpec{{1, 50, 50, 1}}, MlpSpec{{2, 50, 50, 1}}};
  }
  throw ContractError("unknown family");
}

std::vector<Vector> default_training_lambdas(SystemFamily family) {
  std::vector<Vector> out;
  switch (family) {
    case SystemFamily::HenonHeiles:
      for (double a : {0.2, 0.4, 0.6, 0.8})
        for (double b : {0.2, 0.4, 0.6, 0.8}) out.push_back((Vector(2) << a, b).finished());
      break;
    case SystemFamily::Morse:
      for (double a : {0.5, 1.0, 2.0, 4.0}) out.push_back(Vector::Constant(1, a));
      break;
    case SystemFamily::DoubleWell:
      for (double a : {0.1, 0.3, 0.5, 0.7, 0.9}) out.push_back(Vector::Constant(1, a));
      break;
  }
  return out;
}

RunConfig parse_run_config(const json& doc_in, std::optional<std::uint64_t> seed_override) {
  RunConfig cfg;
  json doc = doc_in;
  Section root(doc, "config");
  cfg.output_dir = root.get<std::string>("output_dir", "out");
  cfg.seed = root.get<std::uint64_t>("seed", 0);
  if (seed_override) {
    cfg.seed = *seed_override;
    cfg.seed_from_env = true;
  }

  {
    Section s = root.sub("system");
    const std::string fam = s.get<std::string>("family", "henon_heiles");
    cfg.data.family = parse_family(fam);
    s.finish();
  }
  const SystemFamily family = cfg.data.family;

  {
    Section s = root.sub("data");
    cfg.data.lambdas = s.vectors("lambdas");
    if (cfg.data.lambdas.empty()) cfg.data.lambdas = default_training_lambdas(family);
    check_lambdas(cfg.data.lambdas, family, s.where("lambdas"));
    cfg.data.windows_per_lambda = s.get<std::size_t>("windows_per_lambda", 800);
    cfg.data.window_len = s.get<std::size_t>("window_len", 15);
    cfg.data.dt = s.get<double>("dt", 0.1);
    cfg.data.fine_dt = s.get<double>("fine_dt", 1e-3);
    if (s.has("e_max")) cfg.data.e_max = s.get<double>("e_max", 0.0);
    cfg.data.noise_initial = s.get<bool>("noise_initial", false);
    require(cfg.data.windows_per_lambda >= 1, s.where("windows_per_lambda") + " must be >= 1");
    require(cfg.data.window_len >= 2, s.where("window_len") + " must be >= 2");
    coarsening_ratio(cfg.data.fine_dt, cfg.data.dt);
    Section n = s.sub("noise");
    cfg.data.noise.tau = n.get<double>("tau", 0.1);
    if (n.has("sigma_inf")) cfg.data.noise.sigma_inf = n.get<double>("sigma_inf", 0.0);
    if (n.has("nsr")) cfg.data.noise.nsr = n.get<double>("nsr", 0.0);
    if (!cfg.data.noise.sigma_inf && !cfg.data.noise.nsr) cfg.data.noise.nsr = 0.0;
    n.finish();
    cfg.data.noise.validate();
    s.finish();
  }
  cfg.data.seed = derive_seed(cfg.seed, {0x44415441});

  {
    Section s = root.sub("model");
    cfg.arch = default_architecture(family);
    if (s.has("kinetic_layers")) cfg.arch.kinetic.layer_sizes = s.get<std::vector<int>>("kinetic_layers", {});
    if (s.has("potential_layers")) cfg.arch.potential.layer_sizes = s.get<std::vector<int>>("potential_layers", {});
    cfg.train.loss.squared = !s.get<bool>("unsquared", false);
    s.finish();
    try {
      cfg.arch.kinetic.validate();
      cfg.arch.potential.validate();
    } catch (const ContractError& e) {
      throw ConfigError(std::string("config.model: ") + e.what());
    }
    const int d = family_dim(family);
    require(cfg.arch.kinetic.input_dim() == d, "config.model.kinetic_layers must start with " + std::to_string(d));
    require(cfg.arch.potential.input_dim() == d + family_lambda_dim(family),
            "config.model.potential_layers must start with " + std::to_string(d + family_lambda_dim(family)));
  }

  {
    Section s = root.sub("train");
    cfg.train.epochs = s.get<std::size_t>("epochs", 500);
    const std::string opt = s.get<std::string>("optimizer", "lbfgs");
    require(opt == "lbfgs" || opt == "adam", s.where("optimizer") + " must be lbfgs or adam");
    cfg.train.optimizer = opt == "lbfgs" ? OptimizerKind::Lbfgs : OptimizerKind::Adam;
    Section l = s.sub("lbfgs");
    cfg.train.lbfgs.history = l.get<int>("history", 20);
    cfg.train.lbfgs.max_line_search_evals = l.get<int>("max_line_search_evals", 25);
    cfg.train.lbfgs.tolerance = l.get<double>("tolerance", 1e-10);
    l.finish();
    Section a = s.sub("adam");
    cfg.train.adam.lr = a.get<double>("lr", 1e-3);
    cfg.train.adam.beta1 = a.get<double>("beta1", 0.9);
    cfg.train.adam.beta2 = a.get<double>("beta2", 0.999);
    a.finish();
    cfg.train.batch_size = s.get<std::size_t>("batch_size", 0);
    cfg.train.ensemble_size = s.get<std::size_t>("ensemble_size", 3);
    cfg.train.validation_fraction = s.get<double>("validation_fraction", 0.25);
    cfg.train.loss.chunk = s.get<std::size_t>("chunk", 256);
    s.finish();
    cfg.train.master_seed = derive_seed(cfg.seed, {0x5452414e});
    cfg.train.validate();
  }

  {
    Section s = root.sub("evaluate");
    auto& e = cfg.evaluate;
    e.models_dir = s.get<std::string>("models_dir", "");
    e.oracle = s.get<bool>("oracle", false);
    e.oracle_dt = s.get<double>("oracle_dt", cfg.data.dt);
    e.grid = s.vectors("grid");
    check_lambdas(e.grid, family, s.where("grid"));
    const std::vector<double> a_def = family == SystemFamily::HenonHeiles ? std::vector<double>{0.2, 0.8, 9}
                                      : family == SystemFamily::Morse     ? std::vector<double>{0.5, 4.0, 15}
                                                                          : std::vector<double>{0.1, 0.9, 9};
    e.axis_alpha = axis_or(s, "alpha_axis", a_def);
    e.axis_beta = axis_or(s, "beta_axis", {0.2, 0.8, 9});
    const double e_def = family == SystemFamily::HenonHeiles ? 0.125 : family == SystemFamily::Morse ? -0.5 : 1.0;
    e.energy = s.get<double>("energy", e_def);
    e.n_traj = s.get<std::size_t>("n_traj", 10);
    e.horizon = s.get<std::size_t>("horizon", 500);
    e.predict_lambdas = s.vectors("predict_lambdas");
    check_lambdas(e.predict_lambdas, family, s.where("predict_lambdas"));
    e.dw_alphas = s.get<std::vector<double>>("dw_alphas", {-1.0, -0.5, 0.0, 0.2, 0.4, 0.6, 0.8});
    e.dw_q_range = axis_or(s, "dw_q_range", {-2.0, 2.0, 81});
    if (s.has("noise_runs")) {
      const json& runs = s.raw("noise_runs");
      require(runs.is_array(), s.where("noise_runs") + " must be an array");
      for (std::size_t i = 0; i < runs.size(); ++i) {
        Section r(runs[i], s.where("noise_runs") + "[" + std::to_string(i) + "]");
        EvaluateSection::NoiseRun nr;
        nr.nsr = r.get<double>("nsr", 0.0);
        nr.tau = r.get<double>("tau", 0.0);
        nr.models_dir = r.get<std::string>("models_dir", "");
        require(!nr.models_dir.empty(), r.where("models_dir") + " is required");
        r.finish();
        e.noise_runs.push_back(nr);
      }
    }
    require(e.n_traj >= 1 && e.horizon >= 1, "config.evaluate: n_traj and horizon must be >= 1");
    require(e.oracle_dt > 0.0, "config.evaluate.oracle_dt must be positive");
    s.finish();
  }

  {
    Section s = root.sub("symreg");
    auto& y = cfg.symreg;
    y.lambdas = s.vectors("lambdas");
    if (y.lambdas.empty())
      y.lambdas = family == SystemFamily::HenonHeiles
                      ? std::vector<Vector>{(Vector(2) << 0.4, 0.6).finished(), (Vector(2) << 0.5, 0.7).finished()}
                      : std::vector<Vector>{Vector::Constant(1, 2.0), Vector::Constant(1, 1.5)};
    check_lambdas(y.lambdas, family, s.where("lambdas"));
    y.degree = s.get<int>("degree", 3);
    y.stlsq.threshold = s.get<double>("threshold", 0.05);
    y.stlsq.ridge = s.get<double>("ridge", 0.0);
    y.stlsq.max_iters = s.get<int>("max_iters", 20);
    y.eom.n_traj = s.get<std::size_t>("n_traj", 20);
    y.eom.horizon = s.get<std::size_t>("horizon", 200);
    if (s.has("e_max")) y.eom.e_max = s.get<double>("e_max", 0.0);
    y.hamiltonian = s.get<bool>("hamiltonian", family != SystemFamily::HenonHeiles);
    Section h = s.sub("hamiltonian_fit");
    y.h_degree = h.get<int>("degree", 6);
    y.h_sampling.sample_count = h.get<std::size_t>("sample_count", 2000);
    y.h_sampling.n_traj = h.get<std::size_t>("n_traj", 40);
    y.h_sampling.horizon = h.get<std::size_t>("horizon", 500);
    if (h.has("e_max")) y.h_sampling.e_max = h.get<double>("e_max", 0.0);
    else if (family == SystemFamily::Morse) y.h_sampling.e_max = -0.8;
    y.q_center = h.get<double>("q_center", family == SystemFamily::Morse ? 1.0 : 0.0);
    h.finish();
    require(y.degree >= 1, s.where("degree") + " must be >= 1");
    require(y.stlsq.threshold >= 0.0, s.where("threshold") + " must be >= 0");
    require(y.h_degree >= 2, "config.symreg.hamiltonian_fit.degree must be >= 2");
    s.finish();
    y.eom.seed = derive_seed(cfg.seed, {0x53594d});
    y.h_sampling.seed = derive_seed(cfg.seed, {0x48414d});
  }

  {
    Section s = root.sub("theory");
    auto& t = cfg.theory;
    t.checks = s.get<std::vector<std::string>>("checks", {"fd_variance"});
    for (const auto& c : t.checks)
      require(c == "fd_variance" || c == "bias" || c == "decay" || c == "ahnn",
              s.where("checks") + ": unknown check '" + c + "' (fd_variance, bias, decay, ahnn)");
    t.sigma_inf = s.get<double>("sigma_inf", 0.1);
    t.tau = s.get<double>("tau", 0.2);
    t.ds_list = s.get<std::vector<double>>("ds_list", {});
    if (t.ds_list.empty())
      for (double f : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0}) t.ds_list.push_back(f * t.tau);
    t.fd_trials = s.get<std::size_t>("fd_trials", 100'000);
    t.mc.trials = s.get<std::size_t>("trials", 1'000'000);
    t.mc.group = s.get<std::size_t>("group", 1000);
    t.mc.antithetic = s.get<bool>("antithetic", true);
    t.sigmas = s.get<std::vector<double>>("sigmas", t.sigmas);
    t.n_list = s.get<std::vector<std::size_t>>("n_list", t.n_list);
    t.n_steps = s.get<std::size_t>("n_steps", 3);
    t.dt = s.get<double>("dt", 0.1);
    t.model_seed = s.get<std::uint64_t>("model_seed", 11);
    require(t.tau > 0.0 && t.dt > 0.0, "config.theory: tau and dt must be positive");
    require(t.sigma_inf >= 0.0, "config.theory.sigma_inf must be >= 0");
    require(t.fd_trials >= 2 && t.mc.trials >= 2, "config.theory: trials must be >= 2");
    s.finish();
  }

  {
    Section s = root.sub("check");
    auto& c = cfg.check;
    c.max_val_loss = s.get<double>("max_val_loss", c.max_val_loss);
    c.max_mean_pct_err = s.get<double>("max_mean_pct_err", c.max_mean_pct_err);
    c.param_rel_tol = s.get<double>("param_rel_tol", c.param_rel_tol);
    c.max_abs_z = s.get<double>("max_abs_z", c.max_abs_z);
    c.max_energy_std = s.get<double>("max_energy_std", c.max_energy_std);
    c.max_dw_residual = s.get<double>("max_dw_residual", c.max_dw_residual);
    c.slope_lo = s.get<double>("slope_lo", c.slope_lo);
    c.slope_hi = s.get<double>("slope_hi", c.slope_hi);
    c.decay_rel_tol = s.get<double>("decay_rel_tol", c.decay_rel_tol);
    s.finish();
  }

  root.finish();
  doc["seed"] = cfg.seed;
  cfg.source = doc;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_run_config(doc, seed_override);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_hash(const RunConfig& cfg) {
  json j = cfg.source;
  j.erase("output_dir");  // where results go does not change them
  return hash_hex(j.dump());
}

}  // namespace hamlearn
