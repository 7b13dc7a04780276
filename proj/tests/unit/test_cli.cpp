#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "hamlearn/commands.hpp"
#include "hamlearn/error.hpp"
#include "hamlearn/io.hpp"

using namespace hamlearn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hamlearn_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  write_text_file(p, j.dump(2));
  return p;
}

json small_hh(const fs::path& out) {
  return {{"output_dir", out.string()},
          {"seed", 7},
          {"data", {{"windows_per_lambda", 3}}},
          {"train", {{"epochs", 1}, {"ensemble_size", 1}}},
          {"evaluate", {{"alpha_axis", {0.2, 0.8, 2}}, {"beta_axis", {0.2, 0.8, 2}}, {"n_traj", 2}, {"horizon", 30}}},
          {"symreg", {{"n_traj", 4}, {"horizon", 60}}},
          {"theory", {{"checks", {"fd_variance"}}, {"fd_trials", 20000}}}};
}

int run(const std::string& cmd, const fs::path& cfg, bool check = false, std::ostream* log = nullptr) {
  std::ostringstream sink;
  CliInvocation inv;
  inv.command = cmd;
  inv.config = cfg;
  inv.check = check;
  return run_cli(inv, log ? *log : sink);
}

}  // namespace

TEST_CASE("config: unknown keys are rejected at every level") {
  CHECK_THROWS_AS(parse_run_config(json{{"sed", 1}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"data", {{"windows", 3}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"data", {{"noise", {{"sigma", 0.1}}}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"train", {{"lbfgs", {{"m", 5}}}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"theory", {{"checks", {"eq99"}}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"data", {{"windows_per_lambda", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"train", {{"batch_size", 32}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"data", {{"noise", {{"nsr", 0.1}, {"sigma_inf", 0.1}}}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"model", {{"kinetic_layers", {3, 10, 1}}}}}), ConfigError);
}

TEST_CASE("config: family defaults") {
  const RunConfig hh = parse_run_config(json::object());
  CHECK(hh.data.family == SystemFamily::HenonHeiles);
  CHECK(hh.data.lambdas.size() == 16);
  CHECK(hh.data.windows_per_lambda == 800);
  CHECK(hh.arch.kinetic.layer_sizes == std::vector<int>{2, 30, 30, 30, 1});
  CHECK(hh.arch.potential.layer_sizes == std::vector<int>{4, 30, 30, 30, 1});
  CHECK(hh.train.epochs == 500);
  CHECK(hh.data.noise.disabled());
  const RunConfig mo = parse_run_config(json{{"system", {{"family", "morse"}}}});
  CHECK(mo.data.lambdas.size() == 4);
  CHECK(mo.arch.potential.layer_sizes == std::vector<int>{2, 50, 50, 1});
  const RunConfig dw = parse_run_config(json{{"system", {{"family", "double_well"}}}});
  CHECK(dw.data.lambdas.size() == 5);
}

TEST_CASE("config: seed override and hash") {
  const json doc{{"seed", 5}};
  const RunConfig a = parse_run_config(doc);
  const RunConfig b = parse_run_config(doc, 6);
  CHECK(b.seed == 6);
  CHECK(b.seed_from_env);
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a) == config_hash(parse_run_config(doc)));
  RunConfig c = parse_run_config(json{{"seed", 5}, {"output_dir", "elsewhere"}});
  CHECK(config_hash(c) == config_hash(a));
}

TEST_CASE("cli: exit codes for config and runtime errors") {
  const fs::path dir = scratch("exit");
  CHECK(run("generate", dir / "missing.json") == kExitConfig);
  write_text_file(dir / "bad.json", "{ not json");
  CHECK(run("generate", dir / "bad.json") == kExitConfig);
  CHECK(run("fly", write_config(dir, json::object())) == kExitConfig);
  // No checkpoints to evaluate.
  CHECK(run("predict", write_config(dir, small_hh(dir / "out"))) == kExitRuntime);
}

TEST_CASE("cli generate: manifest content and byte-identical reruns") {
  const fs::path dir = scratch("generate");
  json cfg = small_hh(dir / "out");
  const fs::path path = write_config(dir, cfg);
  REQUIRE(run("generate", path, true) == kExitOk);
  const std::string ds1 = read_text_file(dir / "out" / "dataset.json");
  const std::string man1 = read_text_file(dir / "out" / "generate_manifest.json");
  REQUIRE(run("generate", path, true) == kExitOk);
  CHECK(read_text_file(dir / "out" / "dataset.json") == ds1);
  CHECK(read_text_file(dir / "out" / "generate_manifest.json") == man1);
  const json m = json::parse(man1);
  CHECK(m.at("seed") == 7);
  CHECK(m.at("samples") == 48);
  CHECK(m.at("noise").at("disabled") == true);
  CHECK(m.at("signal_std").get<double>() > 0.0);
  CHECK(m.at("files").contains("dataset.json"));
  CHECK(m.at("files").at("dataset.json") == hash_hex(ds1));
}

TEST_CASE("cli: HAMLEARN_SEED overrides the configured seed and is logged") {
  const fs::path dir = scratch("env");
  const fs::path path = write_config(dir, small_hh(dir / "out"));
  ::setenv("HAMLEARN_SEED", "99", 1);
  std::ostringstream log;
  const int rc = run("generate", path, false, &log);
  ::unsetenv("HAMLEARN_SEED");
  REQUIRE(rc == kExitOk);
  CHECK(log.str().find("HAMLEARN_SEED=99") != std::string::npos);
  const json m = json::parse(read_text_file(dir / "out" / "generate_manifest.json"));
  CHECK(m.at("seed") == 99);
  CHECK(m.at("seed_source") == "HAMLEARN_SEED");
  ::setenv("HAMLEARN_SEED", "abc", 1);
  CHECK(run("generate", path) == kExitConfig);
  ::unsetenv("HAMLEARN_SEED");
}

TEST_CASE("cli sweep on analytic forces gives a near-zero grid") {
  const fs::path dir = scratch("oracle");
  json cfg = small_hh(dir / "out");
  cfg["evaluate"]["oracle"] = true;
  cfg["evaluate"]["oracle_dt"] = 0.01;
  REQUIRE(run("sweep", write_config(dir, cfg), true) == kExitOk);
  const json s = json::parse(read_text_file(dir / "out" / "sweep_summary.json"));
  CHECK(s.at("grid").at("cells") == 4);
  CHECK(s.at("grid").at("mean_pct_err").get<double>() < 0.01);
  CHECK(s.contains("config_hash"));
}

TEST_CASE("cli train, predict, symreg and verify-theory write their tables") {
  const fs::path dir = scratch("pipeline");
  const fs::path path = write_config(dir, small_hh(dir / "out"));
  REQUIRE(run("train", path) == kExitOk);
  CHECK(fs::exists(dir / "out" / "models" / "member_0.json"));
  CHECK(fs::exists(dir / "out" / "loss" / "member_0.csv"));
  // One epoch cannot reach the validation threshold.
  CHECK(run("train", path, true) == kExitCheck);
  REQUIRE(run("predict", path) == kExitOk);
  CHECK(fs::exists(dir / "out" / "predictions.csv"));
  REQUIRE(run("symreg", path) == kExitOk);
  const json t = json::parse(read_text_file(dir / "out" / "symreg_table.json"));
  CHECK(t.at("rows").size() == 2);
  CHECK(t.at("rows")[0].contains("alpha_hat_mean"));
  CHECK(t.at("rows")[0].contains("alpha_hat_std"));
  REQUIRE(run("verify-theory", path, true) == kExitOk);
  CHECK(read_text_file(dir / "out" / "fd_variance.csv").rfind("ds,", 0) == 0);
}

TEST_CASE("load_models orders checkpoints by index") {
  const fs::path dir = scratch("models");
  CHECK_THROWS_AS(load_models(dir), IoError);
  for (int i : {10, 2}) {
    AsrnnModel m = AsrnnModel::zeros(MlpSpec{{1, 2, 1}}, MlpSpec{{2, 2, 1}}, 0.1 * i);
    write_text_file(dir / ("member_" + std::to_string(i) + ".json"), model_to_json(m, 0).dump());
  }
  const auto ms = load_models(dir);
  REQUIRE(ms.size() == 2);
  CHECK(ms[0].dt == doctest::Approx(0.2));
  CHECK(ms[1].dt == doctest::Approx(1.0));
}
