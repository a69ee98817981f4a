#pragma once

// Seeded task simulators with raw receptive-field observations.
//
//   capture     an object crosses the field toward the agent's line of motion
//               and may vanish inside a random invisibility rectangle; the
//               agent either moves along y or tries to capture.
//   memory_cue  a cue shown only on the first step decides which of two
//               final choices is rewarded.
//   reach1d     continuous 1-D position control toward a random target.
//   chain_mdp   5 states, left/right, reward at the right end.

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "e2erl/rl.hpp"
#include "e2erl/rng.hpp"

namespace e2erl {

/// Closed interval used for per-episode randomisation; lo == hi is a point.
struct Interval {
  double lo = 0;
  double hi = 0;

  double sample(Rng& rng) const { return uniform(rng, lo, hi); }
  void check(const std::string& what) const;
  bool operator==(const Interval&) const = default;
};

struct Rect {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  bool operator==(const Rect&) const = default;
};

/// Lattice of receptive fields with bilinear (hat) profiles. Cell centres are
/// evenly spaced with the first and last on the region's edges, so the
/// activations of the four neighbours of any interior point sum to one. An
/// axis with a single cell does not depend on that coordinate.
struct ReceptiveGrid {
  Index nx = 1, ny = 1;
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;

  Index size() const { return nx * ny; }
  /// Writes the activations (row-major: y outer, x inner) into `out`.
  void render(double x, double y, Eigen::Ref<VectorXd> out) const;
  void check(const std::string& what) const;
  bool operator==(const ReceptiveGrid&) const = default;
};

struct SensorConfig {
  ReceptiveGrid object;
  ReceptiveGrid agent;

  Index size() const { return object.size() + agent.size(); }
  /// 8x8 object cells + 16 agent cells.
  static SensorConfig desk();
  /// 41x16 = 656 object cells + 16x11 = 176 agent cells, 832 in total.
  static SensorConfig full_scale();
  bool operator==(const SensorConfig&) const = default;
};

enum class Outcome { Running, Capture, Fail, Timeout, Goal, Wrong };

std::string to_string(Outcome outcome);
Outcome outcome_from_string(const std::string& name);
bool is_success(Outcome outcome);

/// Ground truth exposed for logging and probes. `labels` are the quantities a
/// probe tries to decode from hidden state.
struct Diagnostics {
  long step = 0;
  bool visible = true;
  double agent_y = 0;
  double object_x = 0;
  double object_y = 0;
  VectorXd labels;
};

struct EnvOutcome {
  VectorXd observation;
  double reward = 0;
  bool terminal = false;
  Outcome outcome = Outcome::Running;
  Diagnostics info;
};

struct CaptureConfig {
  double field_x = 4.0;
  double field_y = 3.0;
  double agent_x = 3.5;
  Interval agent_range{0.0, 3.0};
  Interval start_y{0.5, 2.5};
  double cone_half_angle = 0.35;  // radians around +x
  Interval speed{0.07, 0.1};
  Interval invisible_x0{0.8, 1.6};
  Interval invisible_width{0.6, 1.2};
  Interval invisible_y0{0.0, 0.0};
  Interval invisible_height{3.0, 3.0};
  double direction_change_prob = 0.05;
  double capture_radius = 0.25;
  long t_max = 60;
  double motion_scale = 0.25;
  double motor_limit = 0.5;
  double r_capture = 0.9;
  double r_fail = -0.1;
  SensorConfig sensors = SensorConfig::desk();

  void validate() const;
  bool operator==(const CaptureConfig&) const = default;
};

/// Simulator ground truth for the capture task.
struct WorldState {
  double agent_x = 3.5;
  double agent_y = 1.5;
  Eigen::Vector2d object_pos{0, 0};
  Eigen::Vector2d object_vel{0, 0};
  bool visible = true;
  Rect invisibility;
  long step = 0;
  bool done = false;
};

std::pair<WorldState, EnvOutcome> capture_reset(const CaptureConfig& config, Rng& rng);

/// Move: agent_y += motion_scale * (m1 - m2) (each command clamped to the
/// motor limit), then the object advances and reflects off the y walls.
/// While invisible it may re-draw its heading. Capture ends the episode.
std::pair<WorldState, EnvOutcome> capture_step(const WorldState& state, const HybridAction& action,
                                               const CaptureConfig& config, Rng& rng);

VectorXd render_sensors(const WorldState& state, const SensorConfig& sensors);

struct MemoryCueConfig {
  long delay = 10;
  double r_correct = 0.9;
  double r_wrong = 0.0;

  void validate() const;
  bool operator==(const MemoryCueConfig&) const = default;
};

struct Reach1dConfig {
  Interval start{0.0, 1.0};
  Interval target{0.0, 1.0};
  double radius = 0.05;
  double motion_scale = 0.2;
  double motor_limit = 0.5;
  long t_max = 30;
  double r_goal = 0.9;
  Index grid_cells = 11;

  void validate() const;
  bool operator==(const Reach1dConfig&) const = default;
};

struct ChainConfig {
  int states = 5;
  double r_goal = 0.9;
  long t_max = 50;

  void validate() const;
  bool operator==(const ChainConfig&) const = default;
};

using TaskParams = std::variant<CaptureConfig, MemoryCueConfig, Reach1dConfig, ChainConfig>;

struct TaskConfig {
  TaskParams params;

  std::string name() const;
  /// Default parameters for a task name; ConfigError for unknown names.
  static TaskConfig defaults(const std::string& name);
  bool operator==(const TaskConfig&) const = default;
};

/// Uniform reset/step contract over every task.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual Index observation_size() const = 0;
  /// 0 for purely continuous tasks.
  virtual int discrete_actions() const = 0;
  /// 0 for purely discrete tasks.
  virtual int motor_size() const = 0;

  virtual EnvOutcome reset(Rng& rng) = 0;
  /// LifecycleError when called after a terminal step or before reset.
  virtual EnvOutcome step(const HybridAction& action, Rng& rng) = 0;

  /// Human-readable action name for trajectory dumps.
  virtual std::string action_label(const HybridAction& action) const { return describe(action); }
};

std::unique_ptr<Environment> make_task(const TaskConfig& config);
std::unique_ptr<Environment> make_task(const std::string& name);

class CaptureTask final : public Environment {
 public:
  explicit CaptureTask(CaptureConfig config);

  std::string name() const override { return "capture"; }
  Index observation_size() const override { return config_.sensors.size(); }
  int discrete_actions() const override { return 2; }
  int motor_size() const override { return 2; }
  EnvOutcome reset(Rng& rng) override;
  EnvOutcome step(const HybridAction& action, Rng& rng) override;
  std::string action_label(const HybridAction& action) const override;

  const WorldState& world() const { return state_; }
  const CaptureConfig& config() const { return config_; }

  static constexpr int kCapture = 0;
  static constexpr int kMove = 1;

 private:
  CaptureConfig config_;
  WorldState state_;
  bool started_ = false;
};

class MemoryCueTask final : public Environment {
 public:
  explicit MemoryCueTask(MemoryCueConfig config);

  std::string name() const override { return "memory_cue"; }
  Index observation_size() const override { return 3; }
  int discrete_actions() const override { return 2; }
  int motor_size() const override { return 0; }
  EnvOutcome reset(Rng& rng) override;
  EnvOutcome step(const HybridAction& action, Rng& rng) override;

  int cue() const { return cue_; }

 private:
  EnvOutcome observe() const;

  MemoryCueConfig config_;
  int cue_ = 0;
  long step_ = 0;
  bool done_ = true;
};

class Reach1dTask final : public Environment {
 public:
  explicit Reach1dTask(Reach1dConfig config);

  std::string name() const override { return "reach1d"; }
  Index observation_size() const override { return 2 * config_.grid_cells; }
  int discrete_actions() const override { return 0; }
  int motor_size() const override { return 1; }
  EnvOutcome reset(Rng& rng) override;
  EnvOutcome step(const HybridAction& action, Rng& rng) override;

  double position() const { return position_; }
  double target() const { return target_; }

 private:
  EnvOutcome observe() const;

  Reach1dConfig config_;
  ReceptiveGrid grid_;
  double position_ = 0;
  double target_ = 0;
  long step_ = 0;
  bool done_ = true;
};

class ChainMdp final : public Environment {
 public:
  explicit ChainMdp(ChainConfig config);

  std::string name() const override { return "chain_mdp"; }
  Index observation_size() const override { return config_.states; }
  int discrete_actions() const override { return 2; }
  int motor_size() const override { return 0; }
  EnvOutcome reset(Rng& rng) override;
  EnvOutcome step(const HybridAction& action, Rng& rng) override;
  std::string action_label(const HybridAction& action) const override;

  struct Model {
    int next_state;
    double reward;
    bool terminal;
  };
  /// Known transition table: action 0 moves left (stays at 0), action 1
  /// moves right; right from the last state pays r_goal and terminates.
  Model model(int state, int action) const;
  int state() const { return state_; }

  static constexpr int kLeft = 0;
  static constexpr int kRight = 1;

 private:
  EnvOutcome observe() const;

  ChainConfig config_;
  int state_ = 0;
  long step_ = 0;
  bool done_ = true;
};

}  // namespace e2erl
