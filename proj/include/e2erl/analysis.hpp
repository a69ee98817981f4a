#pragma once

// Instruments for what a trained agent has learned: linear probes from hidden
// state to simulator ground truth, and behavioural statistics over greedy
// evaluation trajectories.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "e2erl/harness.hpp"

namespace e2erl {

/// Which steps contribute probe rows.
struct ProbeFilter {
  std::string name;
  std::function<bool(const Diagnostics&)> accept;
  /// True when the filter selects steps whose label is not in the current
  /// observation, so only a recurrent network can carry it.
  bool needs_memory = false;

  static ProbeFilter all();
  static ProbeFilter invisible_only();
  static ProbeFilter nothing();
  static ProbeFilter by_name(const std::string& name);
};

struct ProbeDataset {
  Eigen::MatrixXd hidden;  // rows x hidden units
  Eigen::MatrixXd labels;  // rows x labels
  std::vector<long> episodes;
  std::string filter;

  Index rows() const { return hidden.rows(); }
};

/// Greedy rollouts of a recurrent checkpoint recording (hidden state, label)
/// at every step the filter accepts. Deterministic per seed.
ProbeDataset collect_probe_data(const NetworkWeights<double>& net, const TaskConfig& task,
                                const LearnerConfig& learner, long episodes, const ProbeFilter& filter,
                                std::uint64_t seed, std::vector<TrajectoryRecord>* trajectories = nullptr);

struct ProbeResult {
  Eigen::MatrixXd coefficients;  // (hidden + 1) x labels; last row is the intercept
  Eigen::VectorXd r2_in_sample;
  Eigen::VectorXd r2_held_out;
  Index train_rows = 0;
  Index test_rows = 0;
};

/// Ridge least squares via the normal equations (the intercept is not
/// penalised). The last `holdout_fraction` of episodes are held out.
ProbeResult linear_probe(const ProbeDataset& data, double ridge = 1e-6, double holdout_fraction = 0.2);

/// Same fit after shuffling label rows across the dataset.
ProbeResult permutation_null_probe(const ProbeDataset& data, double ridge, std::uint64_t seed,
                                   double holdout_fraction = 0.2);

/// 1 - SSE/SST per column.
Eigen::VectorXd r_squared(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& predicted);

struct BehaviorStats {
  long episodes = 0;
  long successes = 0;
  double success_rate = 0;
  double mean_waiting_y = 0;          // all waiting steps
  double mean_waiting_y_success = 0;  // waiting steps of successful episodes
  double mean_capture_step = 0;
  long backward_eligible = 0;
  double backward_fraction = 0;

  bool operator==(const BehaviorStats&) const = default;
};

inline constexpr double kApproachLine = 2.5;
inline constexpr int kBackwardWindow = 5;

/// Waiting steps are those before the object first reaches `approach_line`.
/// Backward motion compares agent and object y-velocity signs over the last
/// steps before capture; an episode counts when most of them agree.
BehaviorStats behavior_stats(const std::vector<TrajectoryRecord>& records, double approach_line = kApproachLine);
BehaviorStats behavior_stats(const std::vector<std::filesystem::path>& trajectory_files,
                             double approach_line = kApproachLine);

struct ProbeReport {
  std::string filter;
  Index rows = 0;
  Eigen::VectorXd r2_in_sample;
  Eigen::VectorXd r2_held_out;
  Eigen::VectorXd r2_null_held_out;

  nlohmann::json to_json() const;
};

/// Probe on the run's latest checkpoint with the task's default filter;
/// writes probe.json into the run directory.
ProbeReport probe_run(const std::filesystem::path& run_dir, long episodes, std::uint64_t seed, double ridge);

/// Writes export/learning_curve.csv, export/probe.csv and
/// export/trajectories.csv from the run's existing artifacts.
std::vector<std::filesystem::path> export_plot_data(const std::filesystem::path& run_dir);

struct LearningCurveRow {
  long episode = 0;
  double episode_return = 0;
  int success = 0;
  long steps = 0;
  double mean_abs_td = 0;
  bool operator==(const LearningCurveRow&) const = default;
};

std::vector<LearningCurveRow> read_learning_curve_csv(const std::filesystem::path& path);

}  // namespace e2erl
