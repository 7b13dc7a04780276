#include "hamlearn/datagen.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hamlearn/error.hpp"
#include "hamlearn/io.hpp"

namespace hamlearn {

void OuNoiseConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("OU correlation time tau must be positive");
  if (sigma_inf.has_value() == nsr.has_value())
    throw ConfigError("OU noise needs exactly one of sigma_inf or nsr");
  if (sigma_inf && (!(*sigma_inf >= 0.0) || !std::isfinite(*sigma_inf)))
    throw ConfigError("sigma_inf must be finite and non-negative");
  if (nsr && !(*nsr >= 0.0 && *nsr < 1.0)) throw ConfigError("nsr must lie in [0, 1)");
}

bool OuNoiseConfig::disabled() const { return (nsr && *nsr == 0.0) || (sigma_inf && *sigma_inf == 0.0); }

SamplingBox default_box(SystemFamily family) {
  switch (family) {
    case SystemFamily::HenonHeiles:
      return {Vector::Constant(2, -0.5), Vector::Constant(2, 0.5), Vector::Constant(2, -0.5),
              Vector::Constant(2, 0.5)};
    case SystemFamily::Morse:
      return {Vector::Constant(1, 0.2), Vector::Constant(1, 3.0), Vector::Constant(1, -1.0),
              Vector::Constant(1, 1.0)};
    case SystemFamily::DoubleWell:
      return {Vector::Constant(1, -2.0), Vector::Constant(1, 2.0), Vector::Constant(1, -3.5),
              Vector::Constant(1, 3.5)};
  }
  throw ContractError("unknown system family");
}

double default_e_max(SystemFamily family) {
  switch (family) {
    case SystemFamily::HenonHeiles:
      return 1.0 / 6.0;
    case SystemFamily::Morse:
      return -0.05;
    case SystemFamily::DoubleWell:
      return 6.0;
  }
  throw ContractError("unknown system family");
}

namespace {

constexpr std::size_t kMaxProposals = 1'000'000;

// Proposal region for q when sampling at a fixed energy; wide enough to hold
// the bounded basin at the energies used for evaluation.
std::pair<Vector, Vector> energy_shell_q_box(SystemFamily family) {
  switch (family) {
    case SystemFamily::HenonHeiles:
      return {Vector::Constant(2, -1.5), Vector::Constant(2, 1.5)};
    case SystemFamily::Morse:
      return {Vector::Constant(1, -1.0), Vector::Constant(1, 20.0)};
    case SystemFamily::DoubleWell:
      return {Vector::Constant(1, -3.0), Vector::Constant(1, 3.0)};
  }
  throw ContractError("unknown system family");
}

Vector uniform_in(const Vector& lo, const Vector& hi, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) x(i) = lo(i) + (hi(i) - lo(i)) * u(rng);
  return x;
}

// The Henon–Heiles admissible set {V < E} has unbounded components beyond the
// escape saddles; keep only points whose segment to the origin stays below E.
bool in_bounded_basin(const SystemSpec& spec, const Vector& q, double energy) {
  if (spec.family() != SystemFamily::HenonHeiles) return true;
  constexpr int kChecks = 64;
  for (int i = 1; i < kChecks; ++i) {
    const double t = static_cast<double>(i) / kChecks;
    if (potential(spec, t * q) >= energy) return false;
  }
  return true;
}

}  // namespace

PhaseState sample_initial_condition(const SystemSpec& spec, double e_max, std::optional<double> target_energy,
                                    Rng& rng) {
  return sample_initial_condition(spec, default_box(spec.family()), e_max, target_energy, rng);
}

PhaseState sample_initial_condition(const SystemSpec& spec, const SamplingBox& box, double e_max,
                                    std::optional<double> target_energy, Rng& rng) {
  const int d = spec.dim();
  if (box.q_lo.size() != d || box.q_hi.size() != d || box.p_lo.size() != d || box.p_hi.size() != d)
    throw ShapeError("sampling box", d, box.q_lo.size());

  if (!target_energy) {
    for (std::size_t n = 0; n < kMaxProposals; ++n) {
      PhaseState s{uniform_in(box.q_lo, box.q_hi, rng), uniform_in(box.p_lo, box.p_hi, rng)};
      if (hamiltonian(spec, s) <= e_max) return s;
    }
    throw SamplingError("no initial condition with H <= " + format_double(e_max) + " in " +
                        std::to_string(kMaxProposals) + " proposals for " + family_name(spec.family()));
  }

  const double energy = *target_energy;
  if (energy > e_max) throw ContractError("target energy exceeds e_max");
  const auto [lo, hi] = energy_shell_q_box(spec.family());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n = 0; n < kMaxProposals; ++n) {
    Vector q = uniform_in(lo, hi, rng);
    const double v = potential(spec, q);
    if (!(v < energy) || !in_bounded_basin(spec, q, energy)) continue;
    const double speed = std::sqrt(2.0 * (energy - v));
    Vector p(d);
    if (d == 1) {
      p(0) = u(rng) < 0.5 ? -speed : speed;
    } else {
      const double angle = 2.0 * std::numbers::pi * u(rng);
      p(0) = speed * std::cos(angle);
      p(1) = speed * std::sin(angle);
    }
    return PhaseState{std::move(q), std::move(p)};
  }
  throw SamplingError("no admissible configuration at energy " + format_double(energy) + " for " +
                      family_name(spec.family()));
}

double ou_decay(double dt, double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  return std::exp(-dt / tau);
}

std::vector<Vector> ou_sequence(double sigma_inf, double tau, double dt, std::size_t n, int dim, Rng& rng) {
  if (n < 1) throw ContractError("ou_sequence needs n >= 1");
  if (!(sigma_inf >= 0.0)) throw ConfigError("sigma_inf must be non-negative");
  const double a = ou_decay(dt, tau);
  const double innovation = std::sqrt(1.0 - a * a) * sigma_inf;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(n);
  Vector eta(dim);
  for (int i = 0; i < dim; ++i) eta(i) = sigma_inf * normal(rng);
  out.push_back(eta);
  for (std::size_t k = 1; k < n; ++k) {
    for (int i = 0; i < dim; ++i) eta(i) = a * eta(i) + innovation * normal(rng);
    out.push_back(eta);
  }
  return out;
}

double pooled_signal_std(const std::vector<Trajectory>& clean) {
  if (clean.empty()) throw ContractError("resolve_nsr needs at least one trajectory");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& traj : clean) {
    if (traj.states.empty()) throw ContractError("empty trajectory");
    const Eigen::Index d = traj.states.front().dim();
    const double n = static_cast<double>(traj.states.size());
    for (Eigen::Index c = 0; c < 2 * d; ++c) {
      auto coord = [&](const PhaseState& s) { return c < d ? s.q(c) : s.p(c - d); };
      double mean = 0.0;
      for (const auto& s : traj.states) mean += coord(s);
      mean /= n;
      double var = 0.0;
      for (const auto& s : traj.states) var += (coord(s) - mean) * (coord(s) - mean);
      total += var / n;
      ++count;
    }
  }
  const double pooled = total / static_cast<double>(count);
  if (!(pooled > 0.0)) throw DegenerateDataError("clean trajectories have zero variance; NSR is undefined");
  return std::sqrt(pooled);
}

double resolve_nsr(const std::vector<Trajectory>& clean, double nsr) {
  if (clean.empty()) throw ContractError("resolve_nsr needs at least one trajectory");
  if (nsr == 0.0) return 0.0;
  return nsr * pooled_signal_std(clean);
}

WindowCorpus make_window_corpus(const DataGenConfig& cfg) {
  cfg.noise.validate();
  if (cfg.window_len < 2) throw ConfigError("window_len must be at least 2");
  if (cfg.lambdas.empty()) throw ConfigError("at least one parameter vector is required");
  if (cfg.windows_per_lambda == 0) throw ConfigError("windows_per_lambda must be positive");
  coarsening_ratio(cfg.fine_dt, cfg.dt);

  const double e_max = cfg.e_max.value_or(default_e_max(cfg.family));
  const SamplingBox box = cfg.box.value_or(default_box(cfg.family));
  WindowCorpus corpus;
  corpus.family = cfg.family;
  corpus.dt = cfg.dt;
  corpus.window_len = cfg.window_len;
  corpus.noise = cfg.noise;
  corpus.noise_initial = cfg.noise_initial;
  corpus.seed = cfg.seed;

  std::vector<Trajectory> clean;
  clean.reserve(cfg.lambdas.size() * cfg.windows_per_lambda);
  for (std::size_t li = 0; li < cfg.lambdas.size(); ++li) {
    const SystemSpec spec = SystemSpec::from_lambda(cfg.family, cfg.lambdas[li]);
    for (std::size_t w = 0; w < cfg.windows_per_lambda; ++w) {
      Rng rng = make_rng(cfg.seed, {1, li, w});
      const PhaseState s0 = sample_initial_condition(spec, box, e_max, std::nullopt, rng);
      clean.push_back(fine_then_coarsen(spec, s0, cfg.fine_dt, cfg.dt, cfg.window_len - 1));
    }
  }

  corpus.signal_std = pooled_signal_std(clean);
  corpus.sigma_inf = cfg.noise.nsr ? *cfg.noise.nsr * corpus.signal_std : *cfg.noise.sigma_inf;

  corpus.windows.reserve(clean.size());
  const int d = family_dim(cfg.family);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const std::size_t li = i / cfg.windows_per_lambda;
    const std::size_t w = i % cfg.windows_per_lambda;
    WindowCorpus::Window win;
    win.lambda = cfg.lambdas[li];
    win.clean = clean[i].states;
    win.noisy = win.clean;
    if (corpus.sigma_inf > 0.0) {
      Rng rng = make_rng(cfg.seed, {2, li, w});
      const auto eta = ou_sequence(corpus.sigma_inf, cfg.noise.tau, cfg.dt, cfg.window_len, 2 * d, rng);
      for (std::size_t n = 0; n < cfg.window_len; ++n) {
        win.noisy[n].q += eta[n].head(d);
        win.noisy[n].p += eta[n].tail(d);
      }
    }
    corpus.windows.push_back(std::move(win));
  }
  return corpus;
}

SparseDataset sparsify(const WindowCorpus& corpus, std::uint64_t slice_seed) {
  SparseDataset ds;
  ds.dt = corpus.dt;
  ds.family = corpus.family;
  ds.noise = corpus.noise;
  ds.sigma_inf = corpus.sigma_inf;
  ds.seed = slice_seed;
  ds.signal_std = corpus.signal_std;
  ds.noise_initial = corpus.noise_initial;
  ds.samples.reserve(corpus.windows.size());
  const int max_k = static_cast<int>(corpus.window_len) - 1;
  for (std::size_t i = 0; i < corpus.windows.size(); ++i) {
    const auto& win = corpus.windows[i];
    Rng rng = make_rng(slice_seed, {3, i});
    std::uniform_int_distribution<int> pick(1, max_k);
    const int k = pick(rng);
    SparseSample s;
    s.z0 = corpus.noise_initial ? win.noisy[0] : win.clean[0];
    s.z_obs = win.noisy[static_cast<std::size_t>(k)];
    s.k = k;
    s.lambda = win.lambda;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

SparseDataset make_sparse_dataset(const DataGenConfig& cfg) { return sparsify(make_window_corpus(cfg), cfg.seed); }

namespace {

void write_array(std::ostream& out, const Vector& a, const Vector* b = nullptr) {
  out << '[';
  bool first = true;
  auto emit = [&](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (!first) out << ',';
      out << format_double(v(i));
      first = false;
    }
  };
  emit(a);
  if (b) emit(*b);
  out << ']';
}

Vector to_vector(const nlohmann::json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

PhaseState to_state(const nlohmann::json& j, int d) {
  if (static_cast<int>(j.size()) != 2 * d) throw IoError("state array has wrong length");
  const Vector v = to_vector(j);
  return PhaseState{v.head(d), v.tail(d)};
}

}  // namespace

void write_dataset_json(std::ostream& out, const SparseDataset& ds) {
  out << "{\"format\":\"hamlearn.sparse_dataset/1\",\"system\":\"" << family_name(ds.family)
      << "\",\"dt\":" << format_double(ds.dt) << ",\"noise\":{\"enabled\":" << (ds.sigma_inf > 0.0 ? "true" : "false")
      << ",\"tau\":" << format_double(ds.noise.tau);
  if (ds.noise.nsr) out << ",\"nsr\":" << format_double(*ds.noise.nsr);
  out << ",\"sigma_inf\":" << format_double(ds.sigma_inf)
      << ",\"noise_initial\":" << (ds.noise_initial ? "true" : "false") << "},\"seed\":" << ds.seed
      << ",\"signal_std\":" << format_double(ds.signal_std) << ",\"records\":[";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (i) out << ',';
    out << "\n{\"lambda\":";
    write_array(out, s.lambda);
    out << ",\"k\":" << s.k << ",\"z0\":";
    write_array(out, s.z0.q, &s.z0.p);
    out << ",\"zobs\":";
    write_array(out, s.z_obs.q, &s.z_obs.p);
    out << '}';
  }
  out << "\n]}\n";
}

std::string dataset_to_string(const SparseDataset& ds) {
  std::ostringstream ss;
  write_dataset_json(ss, ds);
  return ss.str();
}

SparseDataset read_dataset_json(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("dataset JSON parse error: ") + e.what());
  }
  try {
    SparseDataset ds;
    ds.family = parse_family(j.at("system").get<std::string>());
    ds.dt = j.at("dt").get<double>();
    const auto& noise = j.at("noise");
    ds.noise = OuNoiseConfig{};
    ds.noise.tau = noise.at("tau").get<double>();
    ds.sigma_inf = noise.at("sigma_inf").get<double>();
    if (noise.contains("nsr"))
      ds.noise.nsr = noise.at("nsr").get<double>();
    else
      ds.noise.sigma_inf = ds.sigma_inf;
    ds.noise_initial = noise.at("noise_initial").get<bool>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.signal_std = j.at("signal_std").get<double>();
    const int d = family_dim(ds.family);
    for (const auto& r : j.at("records")) {
      SparseSample s;
      s.lambda = to_vector(r.at("lambda"));
      s.k = r.at("k").get<int>();
      s.z0 = to_state(r.at("z0"), d);
      s.z_obs = to_state(r.at("zobs"), d);
      ds.samples.push_back(std::move(s));
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed dataset JSON: ") + e.what());
  }
}

}  // namespace hamlearn
