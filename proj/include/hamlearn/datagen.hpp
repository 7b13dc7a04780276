#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hamlearn/integrate.hpp"
#include "hamlearn/rng.hpp"
#include "hamlearn/systems.hpp"

namespace hamlearn {

// Ornstein–Uhlenbeck measurement noise. Exactly one of sigma_inf / nsr is
// set; nsr is resolved against a clean corpus to give sigma_inf.
struct OuNoiseConfig {
  double tau = 0.1;
  std::optional<double> sigma_inf;
  std::optional<double> nsr;

  void validate() const;
  bool disabled() const;

  static OuNoiseConfig none() { return OuNoiseConfig{0.1, std::nullopt, 0.0}; }
};

// One training record: window start, one later noisy observation k steps on.
struct SparseSample {
  PhaseState z0;
  PhaseState z_obs;
  int k = 1;
  Vector lambda;
};

struct SparseDataset {
  std::vector<SparseSample> samples;
  double dt = 0.1;
  SystemFamily family = SystemFamily::HenonHeiles;
  OuNoiseConfig noise = OuNoiseConfig::none();
  double sigma_inf = 0.0;
  std::uint64_t seed = 0;
  double signal_std = 0.0;
  bool noise_initial = false;
};

// Axis-aligned proposal region for initial conditions.
struct SamplingBox {
  Vector q_lo, q_hi, p_lo, p_hi;
};

SamplingBox default_box(SystemFamily family);
double default_e_max(SystemFamily family);

// Without a target energy: rejection sampling of (q, p) in `box` subject to
// H <= e_max. With one: q uniform in the admissible region {V(q) < E}, |p|
// set so that H = E, momentum direction uniform.
PhaseState sample_initial_condition(const SystemSpec& spec, double e_max, std::optional<double> target_energy,
                                    Rng& rng);
PhaseState sample_initial_condition(const SystemSpec& spec, const SamplingBox& box, double e_max,
                                    std::optional<double> target_energy, Rng& rng);

// AR(1) factor a = exp(-dt/tau) of the exact OU update.
double ou_decay(double dt, double tau);

// n noise vectors; each coordinate an independent stationary OU chain started
// from N(0, sigma_inf²).
std::vector<Vector> ou_sequence(double sigma_inf, double tau, double dt, std::size_t n, int dim, Rng& rng);

// Square root of the mean, over trajectories and (q, p) coordinates, of the
// variance about each trajectory's temporal mean.
double pooled_signal_std(const std::vector<Trajectory>& clean);
// nsr * pooled_signal_std; DegenerateDataError on zero signal.
double resolve_nsr(const std::vector<Trajectory>& clean, double nsr);

struct DataGenConfig {
  SystemFamily family = SystemFamily::HenonHeiles;
  std::vector<Vector> lambdas;
  std::size_t windows_per_lambda = 800;
  std::size_t window_len = 15;
  OuNoiseConfig noise = OuNoiseConfig::none();
  double dt = 0.1;
  double fine_dt = 1e-3;
  std::optional<double> e_max;
  std::optional<SamplingBox> box;
  bool noise_initial = false;
  std::uint64_t seed = 0;
};

// Full observation windows before sparsification.
struct WindowCorpus {
  struct Window {
    Vector lambda;
    std::vector<PhaseState> clean;
    std::vector<PhaseState> noisy;
  };

  SystemFamily family = SystemFamily::HenonHeiles;
  double dt = 0.1;
  std::size_t window_len = 15;
  OuNoiseConfig noise = OuNoiseConfig::none();
  double sigma_inf = 0.0;
  double signal_std = 0.0;
  bool noise_initial = false;
  std::uint64_t seed = 0;
  std::vector<Window> windows;
};

WindowCorpus make_window_corpus(const DataGenConfig& cfg);

// Reduces each window to (start, one observation at k ~ U{1..len-1}).
// Different slice seeds re-draw the offsets.
SparseDataset sparsify(const WindowCorpus& corpus, std::uint64_t slice_seed);

// make_window_corpus followed by sparsify with the config seed.
SparseDataset make_sparse_dataset(const DataGenConfig& cfg);

void write_dataset_json(std::ostream& out, const SparseDataset& ds);
SparseDataset read_dataset_json(std::istream& in);
std::string dataset_to_string(const SparseDataset& ds);

}  // namespace hamlearn
