#pragma once

#include <functional>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hamlearn/model.hpp"
#include "hamlearn/optim.hpp"

namespace hamlearn {

enum class OptimizerKind { Lbfgs, Adam };

struct TrainConfig {
  std::size_t epochs = 500;
  OptimizerKind optimizer = OptimizerKind::Lbfgs;
  LbfgsOptions lbfgs;
  AdamOptions adam;
  std::size_t batch_size = 0;  // 0: full batch
  std::size_t ensemble_size = 3;
  std::uint64_t master_seed = 0;
  double validation_fraction = 0.25;
  LossOptions loss;
  int max_reinitializations = 3;

  void validate() const;
};

struct Architecture {
  MlpSpec kinetic;
  MlpSpec potential;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  double wall_time_s = 0.0;  // informational; never serialized
  std::string checkpoint_path;
  bool diverged = false;
  bool early_stop = false;
  std::size_t best_epoch = 0;  // 0: the initialization
  int reinitializations = 0;
  int adam_rescues = 0;
  std::uint64_t member_seed = 0;
  std::vector<std::string> log;
};

// Deterministic split: (train, validation).
std::pair<std::vector<SparseSample>, std::vector<SparseSample>> split_train_validation(
    const std::vector<SparseSample>& samples, double validation_fraction, std::uint64_t seed);

std::pair<AsrnnModel, TrainReport> train_one(const SparseDataset& ds, const Architecture& arch,
                                             const TrainConfig& cfg, std::uint64_t member_seed);

struct EnsembleMember {
  std::optional<AsrnnModel> model;
  TrainReport report;
  std::string error;  // non-empty when the member failed
};

std::uint64_t member_seed(std::uint64_t master_seed, std::size_t index);

// Members share the dataset; only initialization and split differ.
// Called once per member as soon as it finishes.
using MemberDone = std::function<void(std::size_t, const EnsembleMember&)>;

std::vector<EnsembleMember> train_ensemble(const SparseDataset& ds, const Architecture& arch,
                                           const TrainConfig& cfg, const MemberDone& done = {});
// Each member additionally re-draws the sparse slice (offsets k) of the corpus.
std::vector<EnsembleMember> train_ensemble(const WindowCorpus& corpus, const Architecture& arch,
                                           const TrainConfig& cfg, const MemberDone& done = {});

nlohmann::json report_to_json(const TrainReport& r);
// epoch,train_loss,val_loss
std::string loss_curve_csv(const TrainReport& r);

}  // namespace hamlearn
