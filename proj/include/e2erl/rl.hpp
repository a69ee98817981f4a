#pragma once

// TD-family learners that turn rewards into masked per-output training
// targets for a network: Q-learning over discrete actions, actor-critic for
// continuous motor commands, and the Actor-Q hybrid.
//
// Output layouts (all values live in the network's output units):
//   q_learning    [Q_0 .. Q_{n-1}]
//   actor_critic  [V, actor_1 .. actor_m]
//   actor_q       [Q_0 .. Q_{n-1}, actor_1 .. actor_m]
// Value outputs hold q_scale * value so targets stay inside the sigmoid range.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <variant>

#include "e2erl/neuralnet.hpp"
#include "e2erl/rng.hpp"

namespace e2erl {

using VectorXd = Eigen::VectorXd;

enum class LearnerKind { QLearning, ActorCritic, ActorQ };

std::string to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& name);

/// Linear decay from `start` to `end` over `decay_episodes`, then constant.
/// A negative `decay_episodes` means "half of the training run".
struct Schedule {
  double start = 1.0;
  double end = 0.05;
  long decay_episodes = -1;

  double at(long episode, long total_episodes) const;
  bool operator==(const Schedule&) const = default;
};

struct LearnerConfig {
  LearnerKind kind = LearnerKind::ActorQ;
  double discount = 0.96;
  double lr_net = 0.1;
  Schedule epsilon{1.0, 0.05, -1};
  Schedule noise_sigma{0.1, 0.02, -1};
  double q_scale = 0.4;
  double actor_gain = 1.0;
  int discrete_actions = 2;
  int motor_size = 2;
  int move_index = 1;        // actor_q: the discrete action that executes the actor outputs
  double motor_limit = 0.5;  // actuator limit, per component
  long bptt_window = 0;      // 0 = full episode

  void validate() const;
  Index output_size() const;
  Index value_count() const;  // leading value outputs (Q's or V)
  bool has_actor() const { return kind != LearnerKind::QLearning; }
  std::optional<std::size_t> truncation() const;
  bool operator==(const LearnerConfig&) const = default;
};

struct Discrete {
  int index = 0;
  bool operator==(const Discrete&) const = default;
};
struct Continuous {
  VectorXd motor;
  bool operator==(const Continuous& o) const { return motor == o.motor; }
};
using HybridAction = std::variant<Discrete, Continuous>;

std::string describe(const HybridAction& action);

struct Decision {
  HybridAction action;
  VectorXd applied_noise;  // executed motor command - actor output; zeros when no motor command
};

struct Transition {
  VectorXd observation;
  HybridAction action;
  VectorXd applied_noise;
  double reward = 0;
  VectorXd next_observation;
  bool terminal = false;
};

struct TrainingSignal {
  VectorXd target;
  Mask mask;
  double td_error = 0;  // in value units (not scaled by q_scale)
};

/// reward if terminal, else reward + discount * next_q_max.
double q_target(double reward, double discount, double next_q_max, bool terminal);

/// (reward + discount * v_next * [not terminal]) - v_current.
double td_error(double reward, double discount, double v_next, double v_current, bool terminal);

struct ActorSignal {
  VectorXd target;
  Mask mask;
};

/// target = actor_output + gain * td_error * applied_noise, clamped to +-bound.
ActorSignal actor_training_signal(const VectorXd& actor_output, const VectorXd& applied_noise, double td_error,
                                  double actor_gain, double bound = 0.5);

/// Epsilon-greedy; ties go to the lowest index. Always consumes one uniform
/// draw, plus one more when exploring.
int select_discrete(const VectorXd& q_values, double epsilon, Rng& rng);

/// Motor command = actor + N(0, sigma^2) per component, clamped to the
/// actuator limit; the returned noise is the clamped perturbation.
Decision continuous_decide(const VectorXd& actor_output, double sigma, double motor_limit, Rng& rng);

/// Splits outputs as [Q_capture, Q_move, actor_1, actor_2] for the default
/// config (or the general actor_q layout) and picks a hybrid action.
Decision actor_q_decide(const VectorXd& outputs, const LearnerConfig& config, double epsilon, double sigma,
                        Rng& rng);

/// Dispatches on the learner kind.
Decision decide(const VectorXd& outputs, const LearnerConfig& config, double epsilon, double sigma, Rng& rng);

/// Greedy value estimate of a state from its outputs, in value units.
double state_value(const VectorXd& outputs, const LearnerConfig& config);

/// Masked targets for one step. `next_outputs` is ignored when terminal.
TrainingSignal compose_signal(const LearnerConfig& config, const VectorXd& outputs, const Transition& transition,
                              const VectorXd* next_outputs, double output_bound);

/// Online update for one transition. Feedforward nets are trained
/// immediately; recurrent nets get the target attached to the last trace
/// step (which must be the step that observed `transition.observation`).
/// `next_outputs` may be supplied to avoid recomputing them.
TrainingSignal learn_step(const LearnerConfig& config, const Transition& transition, NetworkWeights<double>& net,
                          EpisodeTrace<double>& trace, const VectorXd* next_outputs = nullptr);

/// Episode-end update: one BPTT step for recurrent nets (then the trace is
/// cleared). Returns the episode loss, 0 for feedforward nets.
double finish_episode(const LearnerConfig& config, NetworkWeights<double>& net, EpisodeTrace<double>& trace);

}  // namespace e2erl
