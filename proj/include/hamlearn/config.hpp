#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hamlearn/datagen.hpp"
#include "hamlearn/symreg.hpp"
#include "hamlearn/theory.hpp"
#include "hamlearn/train.hpp"

namespace hamlearn {

struct EvaluateSection {
  std::string models_dir;         // default <output_dir>/models
  bool oracle = false;            // analytic forces instead of trained models
  double oracle_dt = 0.1;
  std::vector<Vector> grid;       // explicit λ list; empty: axes below
  std::vector<double> axis_alpha; // lo, hi, n
  std::vector<double> axis_beta;
  double energy = 0.125;
  std::size_t n_traj = 10;
  std::size_t horizon = 500;
  std::vector<Vector> predict_lambdas;
  std::vector<double> dw_alphas;
  std::vector<double> dw_q_range{-2.0, 2.0, 81};
  struct NoiseRun {
    double nsr = 0.0;
    double tau = 0.0;
    std::string models_dir;
  };
  std::vector<NoiseRun> noise_runs;
};

struct SymregSection {
  std::vector<Vector> lambdas;
  std::vector<Vector> truths;  // reference λ for --check, defaults to lambdas
  int degree = 3;
  StlsqOptions stlsq;
  EomSampling eom;
  bool hamiltonian = false;     // also fit K and V polynomials
  int h_degree = 6;
  HamiltonianSampling h_sampling;
  double q_center = 0.0;
};

struct TheorySection {
  std::vector<std::string> checks{"fd_variance"};
  double sigma_inf = 0.1;
  double tau = 0.2;
  std::vector<double> ds_list;  // fd_variance / ahnn; default spans [τ/10, 10τ]
  std::size_t fd_trials = 100'000;
  McOptions mc;
  std::vector<double> sigmas{1e-3, 2e-3, 5e-3, 1e-2};
  std::vector<std::size_t> n_list{1, 2, 3, 4, 5};
  std::size_t n_steps = 3;
  double dt = 0.1;
  std::uint64_t model_seed = 11;
};

struct CheckSection {
  double max_val_loss = 1e-3;
  double max_mean_pct_err = 1.0;
  double param_rel_tol = 0.05;
  double max_abs_z = 3.0;
  double slope_lo = 1.85;
  double slope_hi = 2.15;
  double decay_rel_tol = 0.2;
  double max_energy_std = 1e-2;   // std of H_θ along a prediction
  double max_dw_residual = 0.05;
};

struct RunConfig {
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  bool seed_from_env = false;
  DataGenConfig data;
  Architecture arch;
  TrainConfig train;
  EvaluateSection evaluate;
  SymregSection symreg;
  TheorySection theory;
  CheckSection check;
  nlohmann::json source;  // the document as given, after the env override
};

// Validates the whole document (unknown keys rejected) before any work.
RunConfig parse_run_config(const nlohmann::json& doc, std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = std::nullopt);

// Hash of the canonical serialization of the effective configuration.
std::string config_hash(const RunConfig& cfg);

// Family defaults for architecture and training λ values.
Architecture default_architecture(SystemFamily family);
std::vector<Vector> default_training_lambdas(SystemFamily family);

}  // namespace hamlearn
