#include "e2erl/envsim.hpp"

#include <algorithm>
#include <cmath>

namespace e2erl {

void Interval::check(const std::string& what) const {
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw ConfigError(what + ": interval bounds must be finite");
  if (lo > hi) throw ConfigError(what + ": empty randomization interval");
}

namespace {

// Hat profile of cell `i` out of `n` centres spread over [lo, hi].
double hat(Index i, Index n, double lo, double hi, double p) {
  if (n == 1) return 1.0;
  const double spacing = (hi - lo) / static_cast<double>(n - 1);
  const double center = lo + spacing * static_cast<double>(i);
  return std::max(0.0, 1.0 - std::abs(p - center) / spacing);
}

}  // namespace

void ReceptiveGrid::render(double x, double y, Eigen::Ref<VectorXd> out) const {
  if (out.size() != size()) throw ShapeError("receptive grid output size mismatch");
  for (Index j = 0; j < ny; ++j) {
    const double wy = hat(j, ny, y_lo, y_hi, y);
    for (Index i = 0; i < nx; ++i) out[j * nx + i] = wy == 0.0 ? 0.0 : wy * hat(i, nx, x_lo, x_hi, x);
  }
}

void ReceptiveGrid::check(const std::string& what) const {
  if (nx < 1 || ny < 1) throw ConfigError(what + ": grid needs at least one cell per axis");
  if ((nx > 1 && !(x_hi > x_lo)) || (ny > 1 && !(y_hi > y_lo)))
    throw ConfigError(what + ": grid region must have positive extent");
}

SensorConfig SensorConfig::desk() {
  return {ReceptiveGrid{8, 8, 0.0, 4.0, 0.0, 3.0}, ReceptiveGrid{1, 16, 3.0, 4.0, 0.0, 3.0}};
}

SensorConfig SensorConfig::full_scale() {
  return {ReceptiveGrid{41, 16, 0.0, 4.0, 0.0, 3.0}, ReceptiveGrid{11, 16, 3.0, 4.0, 0.0, 3.0}};
}

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Running: return "running";
    case Outcome::Capture: return "capture";
    case Outcome::Fail: return "fail";
    case Outcome::Timeout: return "timeout";
    case Outcome::Goal: return "goal";
    case Outcome::Wrong: return "wrong";
  }
  return "running";
}

Outcome outcome_from_string(const std::string& name) {
  for (Outcome o : {Outcome::Running, Outcome::Capture, Outcome::Fail, Outcome::Timeout, Outcome::Goal,
                    Outcome::Wrong})
    if (to_string(o) == name) return o;
  throw ConfigError("unknown outcome '" + name + "'");
}

bool is_success(Outcome outcome) { return outcome == Outcome::Capture || outcome == Outcome::Goal; }

// ---------------------------------------------------------------------------
// capture

void CaptureConfig::validate() const {
  if (!(field_x > 0 && field_y > 0)) throw ConfigError("capture: field must have positive size");
  agent_range.check("capture.agent_range");
  start_y.check("capture.start_y");
  speed.check("capture.speed");
  invisible_x0.check("capture.invisible_x0");
  invisible_width.check("capture.invisible_width");
  invisible_y0.check("capture.invisible_y0");
  invisible_height.check("capture.invisible_height");
  if (!(cone_half_angle >= 0 && cone_half_angle < M_PI / 2)) throw ConfigError("capture: cone must be < 90 deg");
  if (!(speed.lo > 0)) throw ConfigError("capture: speed must be positive");
  if (!(direction_change_prob >= 0 && direction_change_prob <= 1))
    throw ConfigError("capture: direction_change_prob must be a probability");
  if (!(capture_radius > 0)) throw ConfigError("capture: capture_radius must be positive");
  if (t_max < 1) throw ConfigError("capture: t_max must be positive");
  if (!(motion_scale > 0 && motor_limit > 0)) throw ConfigError("capture: motion parameters must be positive");
  sensors.object.check("capture.sensors.object");
  sensors.agent.check("capture.sensors.agent");
}

VectorXd render_sensors(const WorldState& state, const SensorConfig& sensors) {
  VectorXd obs = VectorXd::Zero(sensors.size());
  if (state.visible) sensors.object.render(state.object_pos.x(), state.object_pos.y(), obs.head(sensors.object.size()));
  sensors.agent.render(state.agent_x, state.agent_y, obs.tail(sensors.agent.size()));
  return obs;
}

namespace {

Eigen::Vector2d heading(double speed, double angle) {
  return {speed * std::cos(angle), speed * std::sin(angle)};
}

EnvOutcome capture_outcome(const WorldState& s, const CaptureConfig& config) {
  EnvOutcome out;
  out.observation = render_sensors(s, config.sensors);
  out.info.step = s.step;
  out.info.visible = s.visible;
  out.info.agent_y = s.agent_y;
  out.info.object_x = s.object_pos.x();
  out.info.object_y = s.object_pos.y();
  out.info.labels = VectorXd::Constant(1, s.object_pos.y());
  return out;
}

}  // namespace

std::pair<WorldState, EnvOutcome> capture_reset(const CaptureConfig& config, Rng& rng) {
  config.validate();
  WorldState s;
  s.agent_x = config.agent_x;
  s.agent_y = 0.5 * (config.agent_range.lo + config.agent_range.hi);
  const double y = config.start_y.sample(rng);
  const double angle = uniform(rng, -config.cone_half_angle, config.cone_half_angle);
  const double speed = config.speed.sample(rng);
  s.object_pos = {0.0, y};
  s.object_vel = heading(speed, angle);
  const double x0 = config.invisible_x0.sample(rng);
  const double width = config.invisible_width.sample(rng);
  const double y0 = config.invisible_y0.sample(rng);
  const double height = config.invisible_height.sample(rng);
  s.invisibility = {x0, x0 + width, y0, y0 + height};
  s.visible = !s.invisibility.contains(s.object_pos.x(), s.object_pos.y());
  EnvOutcome out = capture_outcome(s, config);
  return {s, std::move(out)};
}

std::pair<WorldState, EnvOutcome> capture_step(const WorldState& state, const HybridAction& action,
                                               const CaptureConfig& config, Rng& rng) {
  if (state.done) throw LifecycleError("capture: step called on a finished episode");
  WorldState s = state;
  s.step += 1;

  if (const auto* d = std::get_if<Discrete>(&action)) {
    if (d->index != CaptureTask::kCapture)
      throw ShapeError("capture: discrete action must be capture (0); move carries a motor command");
    const double dist = std::hypot(s.object_pos.x() - s.agent_x, s.object_pos.y() - s.agent_y);
    const bool caught = dist <= config.capture_radius;
    s.done = true;
    EnvOutcome out = capture_outcome(s, config);
    out.terminal = true;
    out.reward = caught ? config.r_capture : config.r_fail;
    out.outcome = caught ? Outcome::Capture : Outcome::Fail;
    return {s, std::move(out)};
  }

  const auto& motor = std::get<Continuous>(action).motor;
  if (motor.size() != 2) throw ShapeError("capture: move needs two motor commands");
  const double m1 = std::clamp(motor[0], -config.motor_limit, config.motor_limit);
  const double m2 = std::clamp(motor[1], -config.motor_limit, config.motor_limit);
  s.agent_y = std::clamp(s.agent_y + config.motion_scale * (m1 - m2), config.agent_range.lo, config.agent_range.hi);

  if (!s.visible) {
    // One draw per invisible step keeps the stream consumption independent of the outcome.
    const double u = uniform01(rng);
    const double angle = uniform(rng, -config.cone_half_angle, config.cone_half_angle);
    if (u < config.direction_change_prob) s.object_vel = heading(s.object_vel.norm(), angle);
  }
  s.object_pos += s.object_vel;
  if (s.object_pos.y() < 0) {
    s.object_pos.y() = -s.object_pos.y();
    s.object_vel.y() = -s.object_vel.y();
  } else if (s.object_pos.y() > config.field_y) {
    s.object_pos.y() = 2 * config.field_y - s.object_pos.y();
    s.object_vel.y() = -s.object_vel.y();
  }
  s.visible = !s.invisibility.contains(s.object_pos.x(), s.object_pos.y());

  EnvOutcome out;
  if (s.object_pos.x() > config.field_x || s.step >= config.t_max) {
    s.done = true;
    out = capture_outcome(s, config);
    out.terminal = true;
    out.outcome = Outcome::Timeout;
  } else {
    out = capture_outcome(s, config);
  }
  return {s, std::move(out)};
}

CaptureTask::CaptureTask(CaptureConfig config) : config_(std::move(config)) { config_.validate(); }

EnvOutcome CaptureTask::reset(Rng& rng) {
  auto [s, out] = capture_reset(config_, rng);
  state_ = s;
  started_ = true;
  return out;
}

EnvOutcome CaptureTask::step(const HybridAction& action, Rng& rng) {
  if (!started_) throw LifecycleError("capture: step before reset");
  auto [s, out] = capture_step(state_, action, config_, rng);
  state_ = s;
  return out;
}

std::string CaptureTask::action_label(const HybridAction& action) const {
  return std::holds_alternative<Continuous>(action) ? "move" : "capture";
}

// ---------------------------------------------------------------------------
// memory_cue

void MemoryCueConfig::validate() const {
  if (delay < 0) throw ConfigError("memory_cue: delay must be non-negative");
}

MemoryCueTask::MemoryCueTask(MemoryCueConfig config) : config_(config) { config_.validate(); }

EnvOutcome MemoryCueTask::observe() const {
  EnvOutcome out;
  out.observation = VectorXd::Zero(3);
  if (step_ == 0) out.observation[cue_] = 1.0;
  if (step_ == config_.delay) out.observation[2] = 1.0;
  out.info.step = step_;
  out.info.visible = step_ == 0;
  out.info.labels = VectorXd::Constant(1, static_cast<double>(cue_));
  return out;
}

EnvOutcome MemoryCueTask::reset(Rng& rng) {
  cue_ = static_cast<int>(uniform_index(rng, 2));
  step_ = 0;
  done_ = false;
  return observe();
}

EnvOutcome MemoryCueTask::step(const HybridAction& action, Rng&) {
  if (done_) throw LifecycleError("memory_cue: step called on a finished episode");
  const auto* d = std::get_if<Discrete>(&action);
  if (d == nullptr || d->index < 0 || d->index > 1) throw ShapeError("memory_cue: action must be 0 or 1");
  if (step_ == config_.delay) {
    const bool correct = d->index == cue_;
    done_ = true;
    EnvOutcome out = observe();
    ++step_;
    out.info.step = step_;
    out.observation.setZero();
    out.terminal = true;
    out.reward = correct ? config_.r_correct : config_.r_wrong;
    out.outcome = correct ? Outcome::Goal : Outcome::Wrong;
    return out;
  }
  ++step_;
  return observe();
}

// ---------------------------------------------------------------------------
// reach1d

void Reach1dConfig::validate() const {
  start.check("reach1d.start");
  target.check("reach1d.target");
  if (start.lo < 0 || start.hi > 1 || target.lo < 0 || target.hi > 1)
    throw ConfigError("reach1d: positions live in [0, 1]");
  if (!(radius > 0 && motion_scale > 0 && motor_limit > 0)) throw ConfigError("reach1d: parameters must be positive");
  if (t_max < 1 || grid_cells < 2) throw ConfigError("reach1d: t_max >= 1 and grid_cells >= 2 required");
}

Reach1dTask::Reach1dTask(Reach1dConfig config)
    : config_(config), grid_{1, config.grid_cells, 0.0, 1.0, 0.0, 1.0} {
  config_.validate();
}

EnvOutcome Reach1dTask::observe() const {
  EnvOutcome out;
  out.observation = VectorXd::Zero(observation_size());
  grid_.render(0.0, position_, out.observation.head(config_.grid_cells));
  grid_.render(0.0, target_, out.observation.tail(config_.grid_cells));
  out.info.step = step_;
  out.info.agent_y = position_;
  out.info.object_y = target_;
  out.info.labels = VectorXd::Constant(1, target_);
  return out;
}

EnvOutcome Reach1dTask::reset(Rng& rng) {
  position_ = config_.start.sample(rng);
  target_ = config_.target.sample(rng);
  step_ = 0;
  done_ = false;
  return observe();
}

EnvOutcome Reach1dTask::step(const HybridAction& action, Rng&) {
  if (done_) throw LifecycleError("reach1d: step called on a finished episode");
  const auto* c = std::get_if<Continuous>(&action);
  if (c == nullptr || c->motor.size() != 1) throw ShapeError("reach1d: action must be a 1-D motor command");
  const double m = std::clamp(c->motor[0], -config_.motor_limit, config_.motor_limit);
  position_ = std::clamp(position_ + config_.motion_scale * m, 0.0, 1.0);
  ++step_;
  EnvOutcome out = observe();
  if (std::abs(position_ - target_) <= config_.radius) {
    out.terminal = true;
    out.reward = config_.r_goal;
    out.outcome = Outcome::Goal;
  } else if (step_ >= config_.t_max) {
    out.terminal = true;
    out.outcome = Outcome::Timeout;
  }
  done_ = out.terminal;
  return out;
}

// ---------------------------------------------------------------------------
// chain_mdp

void ChainConfig::validate() const {
  if (states < 2) throw ConfigError("chain_mdp: needs at least two states");
  if (t_max < 1) throw ConfigError("chain_mdp: t_max must be positive");
}

ChainMdp::ChainMdp(ChainConfig config) : config_(config) { config_.validate(); }

std::string ChainMdp::action_label(const HybridAction& action) const {
  const auto* d = std::get_if<Discrete>(&action);
  return d && d->index == kRight ? "right" : "left";
}

ChainMdp::Model ChainMdp::model(int state, int action) const {
  if (action == kRight) {
    if (state == config_.states - 1) return {state, config_.r_goal, true};
    return {state + 1, 0.0, false};
  }
  return {std::max(state - 1, 0), 0.0, false};
}

EnvOutcome ChainMdp::observe() const {
  EnvOutcome out;
  out.observation = VectorXd::Zero(config_.states);
  out.observation[state_] = 1.0;
  out.info.step = step_;
  out.info.agent_y = state_;
  out.info.labels = VectorXd::Constant(1, state_);
  return out;
}

EnvOutcome ChainMdp::reset(Rng&) {
  state_ = 0;
  step_ = 0;
  done_ = false;
  return observe();
}

EnvOutcome ChainMdp::step(const HybridAction& action, Rng&) {
  if (done_) throw LifecycleError("chain_mdp: step called on a finished episode");
  const auto* d = std::get_if<Discrete>(&action);
  if (d == nullptr || d->index < 0 || d->index > 1) throw ShapeError("chain_mdp: action must be 0 or 1");
  const Model m = model(state_, d->index);
  state_ = m.next_state;
  ++step_;
  EnvOutcome out = observe();
  out.reward = m.reward;
  if (m.terminal) {
    out.terminal = true;
    out.outcome = Outcome::Goal;
  } else if (step_ >= config_.t_max) {
    out.terminal = true;
    out.outcome = Outcome::Timeout;
  }
  done_ = out.terminal;
  return out;
}

// ---------------------------------------------------------------------------

std::string TaskConfig::name() const {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, CaptureConfig>) return "capture";
        else if constexpr (std::is_same_v<T, MemoryCueConfig>) return "memory_cue";
        else if constexpr (std::is_same_v<T, Reach1dConfig>) return "reach1d";
        else return "chain_mdp";
      },
      params);
}

TaskConfig TaskConfig::defaults(const std::string& name) {
  if (name == "capture") return {CaptureConfig{}};
  if (name == "memory_cue") return {MemoryCueConfig{}};
  if (name == "reach1d") return {Reach1dConfig{}};
  if (name == "chain_mdp") return {ChainConfig{}};
  throw ConfigError("unknown task '" + name + "'");
}

std::unique_ptr<Environment> make_task(const TaskConfig& config) {
  return std::visit(
      [](const auto& p) -> std::unique_ptr<Environment> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, CaptureConfig>) return std::make_unique<CaptureTask>(p);
        else if constexpr (std::is_same_v<T, MemoryCueConfig>) return std::make_unique<MemoryCueTask>(p);
        else if constexpr (std::is_same_v<T, Reach1dConfig>) return std::make_unique<Reach1dTask>(p);
        else return std::make_unique<ChainMdp>(p);
      },
      config.params);
}

std::unique_ptr<Environment> make_task(const std::string& name) { return make_task(TaskConfig::defaults(name)); }

}  // namespace e2erl
