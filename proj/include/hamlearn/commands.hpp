#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hamlearn/config.hpp"

namespace hamlearn {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2, kExitCheck = 3 };

struct CommandResult {
  std::map<std::string, std::string> files;  // relative path -> content hash
  std::vector<std::string> check_failures;   // empty when every check passed
  bool checked = false;
};

// Each writes into cfg.output_dir and finishes with <command>_manifest.json.
CommandResult cmd_generate(const RunConfig& cfg, bool check, std::ostream& log);
CommandResult cmd_train(const RunConfig& cfg, bool check, std::ostream& log);
CommandResult cmd_predict(const RunConfig& cfg, bool check, std::ostream& log);
CommandResult cmd_sweep(const RunConfig& cfg, bool check, std::ostream& log);
CommandResult cmd_symreg(const RunConfig& cfg, bool check, std::ostream& log);
CommandResult cmd_verify_theory(const RunConfig& cfg, bool check, std::ostream& log);

// Loads member_<i>.json in index order; IoError if none exist.
std::vector<AsrnnModel> load_models(const std::filesystem::path& dir);

struct CliInvocation {
  std::string command;
  std::filesystem::path config;
  bool check = false;
  int threads = 1;
  std::optional<std::filesystem::path> out;
};

// Reads HAMLEARN_SEED, loads the config, dispatches, and maps errors onto
// exit codes. Diagnostics go to `log`.
int run_cli(const CliInvocation& inv, std::ostream& log);

const std::vector<std::string>& command_names();

}  // namespace hamlearn
