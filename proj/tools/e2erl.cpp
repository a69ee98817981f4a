// e2erl command-line front end.
//
//   e2erl train <config.json> [--output DIR]
//   e2erl eval <run-dir> [--episodes N] [--seed S]
//   e2erl resume <run-dir>
//   e2erl probe <run-dir> [--episodes N] [--seed S] [--ridge R]
//   e2erl export <run-dir>
//
// Exit codes: 0 success, 2 configuration error, 3 runtime or numerical error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "e2erl/analysis.hpp"
#include "e2erl/checkpoint.hpp"
#include "e2erl/config.hpp"
#include "e2erl/errors.hpp"
#include "e2erl/harness.hpp"

namespace fs = std::filesystem;
using namespace e2erl;

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

void print_status(const RunStatus& status) {
  if (!status.notice.empty()) std::cout << status.notice << "\n";
  std::cout << status.directory.string() << ": " << status.episodes_completed << " episodes"
            << (status.complete ? " (complete)" : "") << "\n";
}

RunOptions verbose_options() {
  RunOptions options;
  options.log = [](const std::string& line) { std::cout << line << "\n" << std::flush; };
  return options;
}

int cmd_train(const std::string& config_path, const std::string& output) {
  ExperimentConfig config = load_config(config_path);
  if (!output.empty()) config.output_dir = output;
  config.validate();
  print_status(run_experiment(config, verbose_options()));
  return 0;
}

int cmd_eval(const fs::path& run_dir, long episodes, std::uint64_t seed) {
  const ExperimentConfig config = load_run_config(run_dir);
  const RunCheckpoint checkpoint = load_run_checkpoint(latest_checkpoint(run_dir));
  EvalSummary summary = evaluate(checkpoint.net, config.task, config.learner, episodes, seed, true);

  nlohmann::json doc = summary.to_json();
  doc["checkpoint_episode"] = checkpoint.episode;
  doc["seed"] = seed;
  if (config.task.name() == "capture" && !summary.trajectories.empty()) {
    const BehaviorStats stats = behavior_stats(summary.trajectories);
    doc["behavior"] = {{"mean_waiting_y", stats.mean_waiting_y},
                       {"mean_waiting_y_success", stats.mean_waiting_y_success},
                       {"mean_capture_step", stats.mean_capture_step},
                       {"backward_eligible", stats.backward_eligible},
                       {"backward_fraction", stats.backward_fraction}};
  }
  const fs::path out = run_dir / "eval";
  fs::create_directories(out);
  write_trajectories(out / "trajectories.jsonl", summary.trajectories);
  write_file_atomic(out / "summary.json", doc.dump(2) + "\n");
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_probe(const fs::path& run_dir, long episodes, std::uint64_t seed, double ridge) {
  const ProbeReport report = probe_run(run_dir, episodes, seed, ridge);
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_export(const fs::path& run_dir) {
  for (const auto& path : export_plot_data(run_dir)) std::cout << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"End-to-end reinforcement learning with recurrent networks"};
  app.require_subcommand(1);

  std::string config_path, output, run_dir;
  long episodes = 500;
  std::uint64_t seed = 12345;
  double ridge = 1e-6;

  auto* train = app.add_subcommand("train", "Start a training run from a config file");
  train->add_option("config", config_path, "Experiment config (JSON)")->required();
  train->add_option("--output", output, "Override the run directory");

  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a run's latest checkpoint");
  eval->add_option("run_dir", run_dir)->required();
  eval->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed);

  auto* resume_cmd = app.add_subcommand("resume", "Continue a run from its latest checkpoint");
  resume_cmd->add_option("run_dir", run_dir)->required();

  auto* probe = app.add_subcommand("probe", "Linear probe from hidden state to world state");
  probe->add_option("run_dir", run_dir)->required();
  probe->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  probe->add_option("--seed", seed);
  probe->add_option("--ridge", ridge)->check(CLI::NonNegativeNumber);

  auto* export_cmd = app.add_subcommand("export", "Write CSV learning curves and trajectories");
  export_cmd->add_option("run_dir", run_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*train) return cmd_train(config_path, output);
    if (*eval) return cmd_eval(run_dir, episodes, seed);
    if (*resume_cmd) {
      print_status(resume(run_dir, verbose_options()));
      return 0;
    }
    if (*probe) return cmd_probe(run_dir, episodes, seed, ridge);
    if (*export_cmd) return cmd_export(run_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeExit;
  }
  return kRuntimeExit;
}
