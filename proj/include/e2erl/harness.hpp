#pragma once

// Config-driven training runs.
//
// A run directory holds:
//   config.json          canonical config
//   manifest.json        config hash, seed, progress, timestamps (the only non-deterministic file)
//   episodes.jsonl       one record per training episode
//   evals.jsonl          one record per periodic greedy evaluation
//   checkpoints/ckpt-<episode>.txt   network + generator streams, checksummed

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "e2erl/config.hpp"
#include "e2erl/envsim.hpp"
#include "e2erl/neuralnet.hpp"
#include "e2erl/rl.hpp"
#include "e2erl/rng.hpp"

namespace e2erl {

struct EpisodeLog {
  long episode = 0;
  double episode_return = 0;
  Outcome outcome = Outcome::Running;
  long steps = 0;
  double mean_abs_td = 0;

  nlohmann::json to_json() const;
  static EpisodeLog from_json(const nlohmann::json& doc);
  bool operator==(const EpisodeLog&) const = default;
};

/// One environment step as seen by the agent: the state the action was
/// chosen in, the action, and the reward it earned.
struct TrajectoryRecord {
  long episode = 0;
  long step = 0;
  double agent_y = 0;
  double object_x = 0;
  double object_y = 0;
  bool visible = true;
  std::string action;
  std::vector<double> motor;
  double reward = 0;
  bool terminal = false;
  Outcome outcome = Outcome::Running;

  nlohmann::json to_json() const;
  static TrajectoryRecord from_json(const nlohmann::json& doc);
  bool operator==(const TrajectoryRecord&) const = default;
};

/// Called once per step with the hidden state after processing an
/// observation and the ground truth of that observation.
using HiddenObserver = std::function<void(const VectorXd& hidden, const Diagnostics& info)>;

struct EpisodeOptions {
  bool learn = false;
  double epsilon = 0;
  double sigma = 0;
  long episode_index = 0;
  std::vector<TrajectoryRecord>* trajectory = nullptr;
  HiddenObserver observer;
};

struct EpisodeResult {
  double episode_return = 0;
  Outcome outcome = Outcome::Running;
  long steps = 0;
  double mean_abs_td = 0;
  double loss = 0;
};

/// Runs one episode of the sense-act(-learn) loop. With `learn` set,
/// feedforward nets are updated every step and recurrent nets receive one
/// BPTT update at the end. Throws NumericalError on non-finite outputs or weights.
EpisodeResult run_episode(Environment& env, NetworkWeights<double>& net, const LearnerConfig& learner,
                          Rng& env_rng, Rng& explore_rng, const EpisodeOptions& options);

struct EvalSummary {
  long episodes = 0;
  double success_rate = 0;
  double mean_return = 0;
  double mean_steps = 0;
  std::vector<TrajectoryRecord> trajectories;

  nlohmann::json to_json() const;  // without trajectories
};

/// Greedy evaluation (epsilon = 0, no motor noise); never modifies `net`.
/// CheckpointError when the network does not fit the task.
EvalSummary evaluate(const NetworkWeights<double>& net, const TaskConfig& task, const LearnerConfig& learner,
                     long episodes, std::uint64_t seed, bool keep_trajectories = false);

/// Evaluation with the run's fixed evaluation seed, as used at eval points.
EvalSummary evaluate_run_point(const NetworkWeights<double>& net, const ExperimentConfig& config);

/// Checks that a network's input/output sizes fit a task and learner.
void check_compatible(const NetworkWeights<double>& net, const TaskConfig& task, const LearnerConfig& learner);

struct RunCheckpoint {
  long episode = 0;
  std::string config_hash;
  RngStreams streams;
  NetworkWeights<double> net;
};

std::string serialize_run_checkpoint(const RunCheckpoint& checkpoint);
RunCheckpoint deserialize_run_checkpoint(const std::string& text);

struct RunOptions {
  /// Stop after this many episodes in this session (simulated interruption).
  std::optional<long> stop_after;
  /// Write a checkpoint when stopping early.
  bool checkpoint_on_stop = true;
  /// Receives progress and notices.
  std::function<void(const std::string&)> log;
};

struct RunStatus {
  std::filesystem::path directory;
  long episodes_completed = 0;
  bool complete = false;
  std::string notice;
};

/// Starts a fresh run in `config.output_dir`, which must not already hold a run.
RunStatus run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Continues a run from its latest checkpoint; logs written after that
/// checkpoint are discarded and regenerated identically.
RunStatus resume(const std::filesystem::path& run_dir, const RunOptions& options = {});

namespace run_files {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kEpisodes = "episodes.jsonl";
inline constexpr const char* kEvals = "evals.jsonl";
inline constexpr const char* kCheckpoints = "checkpoints";
}  // namespace run_files

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, long episode);
/// Highest-episode checkpoint in the run; CheckpointError when none exist.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);
RunCheckpoint load_run_checkpoint(const std::filesystem::path& path);
ExperimentConfig load_run_config(const std::filesystem::path& run_dir);

std::vector<EpisodeLog> read_episode_logs(const std::filesystem::path& run_dir);
std::vector<TrajectoryRecord> read_trajectories(const std::filesystem::path& path);
void write_trajectories(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& records);

}  // namespace e2erl
