#include "e2erl/rl.hpp"

#include <algorithm>
#include <cmath>

namespace e2erl {

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::QLearning: return "q_learning";
    case LearnerKind::ActorCritic: return "actor_critic";
    case LearnerKind::ActorQ: return "actor_q";
  }
  return "actor_q";
}

LearnerKind learner_kind_from_string(const std::string& name) {
  if (name == "q_learning") return LearnerKind::QLearning;
  if (name == "actor_critic") return LearnerKind::ActorCritic;
  if (name == "actor_q") return LearnerKind::ActorQ;
  throw ConfigError("unknown learner kind '" + name + "'");
}

double Schedule::at(long episode, long total_episodes) const {
  const long span = decay_episodes < 0 ? total_episodes / 2 : decay_episodes;
  if (span <= 0 || episode >= span) return end;
  return start + (end - start) * static_cast<double>(episode) / static_cast<double>(span);
}

void LearnerConfig::validate() const {
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  if (!(lr_net > 0)) throw ConfigError("lr_net must be positive");
  if (!(q_scale > 0)) throw ConfigError("q_scale must be positive");
  if (!(actor_gain > 0)) throw ConfigError("actor_gain must be positive");
  if (!(motor_limit > 0)) throw ConfigError("motor_limit must be positive");
  if (bptt_window < 0) throw ConfigError("bptt_window must be non-negative");
  for (const Schedule* s : {&epsilon, &noise_sigma}) {
    if (!(s->start >= 0 && s->end >= 0)) throw ConfigError("schedules must be non-negative");
    if (s->end > s->start) throw ConfigError("schedules must be non-increasing");
  }
  if (epsilon.start > 1.0) throw ConfigError("epsilon must not exceed 1");
  if (kind != LearnerKind::ActorCritic && discrete_actions < 1)
    throw ConfigError("discrete_actions must be positive");
  if (kind != LearnerKind::QLearning && motor_size < 1) throw ConfigError("motor_size must be positive");
  if (kind == LearnerKind::ActorQ && (move_index < 0 || move_index >= discrete_actions))
    throw ConfigError("move_index must name one of the discrete actions");
}

Index LearnerConfig::value_count() const {
  return kind == LearnerKind::ActorCritic ? 1 : discrete_actions;
}

Index LearnerConfig::output_size() const { return value_count() + (has_actor() ? motor_size : 0); }

std::optional<std::size_t> LearnerConfig::truncation() const {
  if (bptt_window <= 0) return std::nullopt;
  return static_cast<std::size_t>(bptt_window);
}

std::string describe(const HybridAction& action) {
  if (const auto* d = std::get_if<Discrete>(&action)) return std::to_string(d->index);
  return "move";
}

double q_target(double reward, double discount, double next_q_max, bool terminal) {
  return terminal ? reward : reward + discount * next_q_max;
}

double td_error(double reward, double discount, double v_next, double v_current, bool terminal) {
  return (reward + (terminal ? 0.0 : discount * v_next)) - v_current;
}

ActorSignal actor_training_signal(const VectorXd& actor_output, const VectorXd& applied_noise, double td_error,
                                  double actor_gain, double bound) {
  if (actor_output.size() != applied_noise.size()) throw ShapeError("actor output and noise lengths differ");
  ActorSignal signal;
  signal.target = (actor_output + actor_gain * td_error * applied_noise).cwiseMax(-bound).cwiseMin(bound);
  signal.mask = Mask::Constant(actor_output.size(), true);
  return signal;
}

int select_discrete(const VectorXd& q_values, double epsilon, Rng& rng) {
  if (q_values.size() == 0) throw ShapeError("no action values to choose from");
  if (uniform01(rng) < epsilon) return static_cast<int>(uniform_index(rng, q_values.size()));
  Index best = 0;
  for (Index i = 1; i < q_values.size(); ++i)
    if (q_values[i] > q_values[best]) best = i;
  return static_cast<int>(best);
}

Decision continuous_decide(const VectorXd& actor_output, double sigma, double motor_limit, Rng& rng) {
  VectorXd motor(actor_output.size());
  for (Index i = 0; i < motor.size(); ++i) {
    const double noisy = actor_output[i] + (sigma > 0 ? sigma * standard_normal(rng) : 0.0);
    motor[i] = std::clamp(noisy, -motor_limit, motor_limit);
  }
  VectorXd noise = motor - actor_output;
  return {Continuous{std::move(motor)}, std::move(noise)};
}

namespace {

void check_outputs(const VectorXd& outputs, const LearnerConfig& config) {
  if (outputs.size() < config.output_size())
    throw ShapeError("network has " + std::to_string(outputs.size()) + " outputs, learner needs " +
                     std::to_string(config.output_size()));
}

VectorXd actor_slice(const VectorXd& outputs, const LearnerConfig& config) {
  return outputs.segment(config.value_count(), config.motor_size);
}

}  // namespace

Decision actor_q_decide(const VectorXd& outputs, const LearnerConfig& config, double epsilon, double sigma,
                        Rng& rng) {
  if (outputs.size() < 4) throw ShapeError("actor-q needs at least four outputs");
  check_outputs(outputs, config);
  const int choice = select_discrete(outputs.head(config.discrete_actions), epsilon, rng);
  if (choice != config.move_index) return {Discrete{choice}, VectorXd::Zero(config.motor_size)};
  return continuous_decide(actor_slice(outputs, config), sigma, config.motor_limit, rng);
}

Decision decide(const VectorXd& outputs, const LearnerConfig& config, double epsilon, double sigma, Rng& rng) {
  check_outputs(outputs, config);
  switch (config.kind) {
    case LearnerKind::QLearning:
      return {Discrete{select_discrete(outputs.head(config.discrete_actions), epsilon, rng)}, VectorXd()};
    case LearnerKind::ActorCritic:
      return continuous_decide(actor_slice(outputs, config), sigma, config.motor_limit, rng);
    case LearnerKind::ActorQ: {
      const int choice = select_discrete(outputs.head(config.discrete_actions), epsilon, rng);
      if (choice != config.move_index) return {Discrete{choice}, VectorXd::Zero(config.motor_size)};
      return continuous_decide(actor_slice(outputs, config), sigma, config.motor_limit, rng);
    }
  }
  return {};
}

double state_value(const VectorXd& outputs, const LearnerConfig& config) {
  check_outputs(outputs, config);
  if (config.kind == LearnerKind::ActorCritic) return outputs[0] / config.q_scale;
  return outputs.head(config.discrete_actions).maxCoeff() / config.q_scale;
}

TrainingSignal compose_signal(const LearnerConfig& config, const VectorXd& outputs, const Transition& transition,
                              const VectorXd* next_outputs, double output_bound) {
  check_outputs(outputs, config);
  if (!transition.terminal) {
    if (next_outputs == nullptr) throw LifecycleError("non-terminal transition needs successor outputs");
    check_outputs(*next_outputs, config);
  }
  const double q = config.q_scale;
  TrainingSignal signal{outputs, Mask::Constant(outputs.size(), false), 0.0};
  const double next_value = transition.terminal ? 0.0 : state_value(*next_outputs, config);

  auto train_actor = [&](double delta) {
    if (transition.applied_noise.size() != config.motor_size)
      throw ShapeError("applied noise must have one entry per motor output");
    const auto actor = actor_training_signal(actor_slice(outputs, config), transition.applied_noise, delta,
                                             config.actor_gain, output_bound);
    signal.target.segment(config.value_count(), config.motor_size) = actor.target;
    signal.mask.segment(config.value_count(), config.motor_size) = actor.mask;
  };

  if (config.kind == LearnerKind::ActorCritic) {
    const auto* motion = std::get_if<Continuous>(&transition.action);
    if (motion == nullptr) throw ShapeError("actor-critic expects a continuous action");
    const double v = outputs[0] / q;
    signal.td_error = td_error(transition.reward, config.discount, next_value, v, transition.terminal);
    signal.target[0] = q * (v + signal.td_error);
    signal.mask[0] = true;
    train_actor(signal.td_error);
    return signal;
  }

  int chosen = 0;
  if (const auto* d = std::get_if<Discrete>(&transition.action)) {
    chosen = d->index;
  } else if (config.kind == LearnerKind::ActorQ) {
    chosen = config.move_index;
  } else {
    throw ShapeError("q-learning expects a discrete action");
  }
  if (chosen < 0 || chosen >= config.discrete_actions) throw ShapeError("discrete action index out of range");
  const double y = q_target(transition.reward, config.discount, next_value, transition.terminal);
  signal.td_error = y - outputs[chosen] / q;
  signal.target[chosen] = q * y;
  signal.mask[chosen] = true;
  if (config.kind == LearnerKind::ActorQ && std::holds_alternative<Continuous>(transition.action))
    train_actor(signal.td_error);
  return signal;
}

TrainingSignal learn_step(const LearnerConfig& config, const Transition& transition, NetworkWeights<double>& net,
                          EpisodeTrace<double>& trace, const VectorXd* next_outputs) {
  const double bound = net.output_activation.bound();
  if (!net.is_recurrent()) {
    const VectorXd outputs = forward_layered(net, transition.observation);
    VectorXd next;
    if (!transition.terminal && next_outputs == nullptr) {
      next = forward_layered(net, transition.next_observation);
      next_outputs = &next;
    }
    TrainingSignal signal = compose_signal(config, outputs, transition, next_outputs, bound);
    backprop_layered(net, transition.observation, signal.target, signal.mask, config.lr_net);
    return signal;
  }

  if (trace.empty()) throw IntegrityError("learn_step on an empty trace");
  const auto& step = trace.steps.back();
  if (step.input.size() != transition.observation.size() || step.input != transition.observation)
    throw IntegrityError("last trace step did not observe this transition");
  if (step.outputs.size() != net.output_size()) throw IntegrityError("trace does not belong to this network");
  VectorXd next;
  if (!transition.terminal && next_outputs == nullptr) {
    const auto after = rnn_step(net, RnnState<double>{step.hidden_before}, step.input);
    next = rnn_step(net, after.state, transition.next_observation).output;
    next_outputs = &next;
  }
  TrainingSignal signal = compose_signal(config, step.outputs, transition, next_outputs, bound);
  trace.set_target(trace.size() - 1, signal.target, signal.mask);
  return signal;
}

double finish_episode(const LearnerConfig& config, NetworkWeights<double>& net, EpisodeTrace<double>& trace) {
  if (!net.is_recurrent()) return 0.0;
  const double loss = bptt_train(net, trace, config.lr_net, config.truncation());
  trace.clear();
  return loss;
}

}  // namespace e2erl
