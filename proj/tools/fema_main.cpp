#include "fema/error.hpp"
#include "fema/harness/config.hpp"
#include "fema/harness/report.hpp"
#include "fema/harness/runner.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace fema;

namespace {

harness::RunConfig load_with_overrides(const std::string& path) {
  harness::RunConfig cfg = harness::load_config(path);
  harness::apply_env_overrides(cfg, harness::override_environment());
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fema: failure episodic memory experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, axis, values_arg, report_dir, ckpt, env_kind, eval_out;
  std::uint64_t seed_offset = 0, eval_seed = 0;
  int window = 0, episodes = 0;

  auto* train = app.add_subcommand("train", "train every seed of a config");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--seed-offset", seed_offset, "added to every seed");
  train->add_option("--out", out_dir, "run directory (default runs/<config name>)");

  auto* ablate = app.add_subcommand("ablate", "sweep one FEMA hyperparameter");
  ablate->add_option("--config", config_path, "config file")->required();
  ablate->add_option("--axis", axis, "epsilon|n_candidates|update_m|top_o|lambda_risk")->required();
  ablate->add_option("--values", values_arg, "comma-separated values")->required();
  ablate->add_option("--out", out_dir, "sweep directory (default runs/<config name>_<axis>)");

  auto* report = app.add_subcommand("report", "CSV and summary for a run or sweep directory");
  report->add_option("dir", report_dir, "run or sweep directory")->required();
  report->add_option("--window", window, "trailing episodes for smoothing");

  auto* eval = app.add_subcommand("eval", "deterministic rollouts of a checkpoint");
  eval->add_option("--ckpt", ckpt, "checkpoint.bin")->required();
  eval->add_option("--env", env_kind, "environment kind")->required();
  eval->add_option("--episodes", episodes, "episode count")->required();
  eval->add_option("--seed", eval_seed, "environment seed");
  eval->add_option("--out", eval_out, "write the table here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto cfg = load_with_overrides(config_path);
      const fs::path out = out_dir.empty() ? fs::path("runs") / fs::path(config_path).stem() : fs::path(out_dir);
      harness::cmd_train(cfg, out, seed_offset, &std::cerr);
      std::cout << out.string() << '\n';
    } else if (*ablate) {
      const auto cfg = load_with_overrides(config_path);
      std::vector<std::string> values;
      std::stringstream ss(values_arg);
      for (std::string v; std::getline(ss, v, ',');)
        if (!v.empty()) values.push_back(v);
      const fs::path out =
          out_dir.empty() ? fs::path("runs") / (fs::path(config_path).stem().string() + "_" + axis) : fs::path(out_dir);
      harness::cmd_ablate(cfg, out, axis, values, &std::cerr);
      std::cout << out.string() << '\n';
    } else if (*report) {
      const auto res = harness::cmd_report(report_dir, window > 0 ? std::optional<int>(window) : std::nullopt, &std::cerr);
      std::cout << res.summary;
    } else if (*eval) {
      const auto rows = harness::cmd_eval(ckpt, env_kind, episodes, eval_seed);
      const std::string table = harness::eval_table_csv(rows);
      if (eval_out.empty()) {
        std::cout << table;
      } else {
        std::ofstream(eval_out) << table;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
