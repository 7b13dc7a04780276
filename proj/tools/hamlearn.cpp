#include <iostream>

#include <CLI11.hpp>

#include "hamlearn/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Learn parameter-dependent Hamiltonians from sparse noisy trajectories"};
  app.require_subcommand(1, 1);

  hamlearn::CliInvocation inv;
  std::string out;
  for (const auto& name : hamlearn::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", inv.config, "run configuration (JSON)")->required();
    sub->add_flag("--check", inv.check, "run acceptance assertions; exit 3 on failure");
    sub->add_option("--threads", inv.threads, "worker cap")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory (overrides the config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : hamlearn::kExitConfig;
  }
  inv.command = app.get_subcommands().front()->get_name();
  if (!out.empty()) inv.out = out;
  return hamlearn::run_cli(inv, std::cerr);
}
