#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "agin/harness.hpp"

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", path, "Experiment JSON file (defaults apply when omitted)");
    cmd->add_option("--set", overrides, "Override as dotted.key=value (repeatable)");
  }

  agin::ExperimentSpec load() const {
    if (path.empty()) return agin::parse_experiment("{}", overrides);
    return agin::load_experiment(path, overrides);
  }
};

std::optional<std::filesystem::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-UAV coverage simulator and trainer"};
  app.require_subcommand(1);

  ConfigArgs train_args, eval_args, fail_args, check_args;
  std::string eval_ckpt, fail_ckpt;
  std::vector<std::string> plot_inputs;
  std::string plot_out = "plots";

  auto* train = app.add_subcommand("train", "Train every seed; write CSVs, aggregate and checkpoints");
  train_args.attach(train);
  auto* eval = app.add_subcommand("eval", "Evaluate a trained (or geometric) controller");
  eval_args.attach(eval);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint manifest (default: per-seed file in output_dir)");
  auto* fail = app.add_subcommand("failure-eval", "Paired runs with and without the failure schedule");
  fail_args.attach(fail);
  fail->add_option("--checkpoint", fail_ckpt, "Checkpoint manifest (default: per-seed file in output_dir)");
  auto* plot = app.add_subcommand("plot", "Aggregate CSVs into plot data and SVG charts");
  plot->add_option("inputs", plot_inputs, "CSV files with identical columns")->required();
  plot->add_option("-o,--out", plot_out, "Output directory");
  auto* check = app.add_subcommand("validate-config", "Resolve and print a config, or report the first error");
  check_args.attach(check);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      const auto out = agin::cmd_train(train_args.load());
      std::cout << "wrote " << out.aggregate_csv.string() << "\n";
    } else if (*eval) {
      std::cout << "wrote " << agin::cmd_eval(eval_args.load(), optional_path(eval_ckpt)).string() << "\n";
    } else if (*fail) {
      const auto r = agin::cmd_failure_eval(fail_args.load(), optional_path(fail_ckpt));
      std::cout << "wrote " << r.trace_csv.string() << " and " << r.recovery_csv.string() << "\n";
    } else if (*plot) {
      std::vector<std::filesystem::path> inputs(plot_inputs.begin(), plot_inputs.end());
      for (const auto& p : agin::cmd_plot(inputs, plot_out)) std::cout << "wrote " << p.string() << "\n";
    } else if (*check) {
      std::cout << agin::experiment_to_json(check_args.load());
    }
  } catch (const agin::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
