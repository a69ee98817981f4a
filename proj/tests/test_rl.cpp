#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "e2erl/envsim.hpp"
#include "e2erl/harness.hpp"
#include "e2erl/rl.hpp"
#include "test_support.hpp"

using namespace e2erl;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> values) {
  VectorXd v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

LearnerConfig actor_q_config() {
  LearnerConfig c;
  c.kind = LearnerKind::ActorQ;
  return c;
}

// Value iteration on the chain's known model, independent of the learner.
std::vector<std::array<double, 2>> chain_q_star(const ChainMdp& chain, int states, double discount) {
  std::vector<std::array<double, 2>> q(states, {0.0, 0.0});
  for (int sweep = 0; sweep < 2000; ++sweep) {
    auto next = q;
    for (int s = 0; s < states; ++s)
      for (int a = 0; a < 2; ++a) {
        const auto m = chain.model(s, a);
        next[s][a] = m.reward + (m.terminal ? 0.0 : discount * std::max(q[m.next_state][0], q[m.next_state][1]));
      }
    q = next;
  }
  return q;
}

// Single linear layer without bias over one-hot states: every output is one
// table entry, scaled by q_scale.
NetworkWeights<double> tabular_net(Index states, Index actions) {
  NetworkShape shape{{states, actions}};
  shape.output_activation = ActivationSpec::linear();
  shape.trainable_bias = false;
  return NetworkWeights<double>::zeros(shape);
}

}  // namespace

TEST(QTarget, Examples) {
  EXPECT_EQ(q_target(0.9, 0.5, 123.0, true), 0.9);
  EXPECT_EQ(q_target(0.9, 0.0, -7.0, true), 0.9);
  EXPECT_DOUBLE_EQ(q_target(0.0, 0.9, 0.5, false), 0.45);
}

TEST(TdError, Examples) {
  EXPECT_EQ(td_error(0.1, 0.9, 0.5, 0.1 + 0.9 * 0.5, false), 0.0);
  EXPECT_EQ(td_error(1.0, 0.9, 0.0, 0.0, true), 1.0);
  EXPECT_EQ(td_error(1.0, 0.9, 55.0, 0.0, true), 1.0);
}

TEST(TdError, TabularTd0RecoversChainValues) {
  // Always-right policy: V(s) = r_goal * discount^(states - 1 - s).
  ChainConfig cc;
  ChainMdp chain(cc);
  const double discount = 0.9, alpha = 0.2;
  std::vector<double> v(cc.states, 0.0);
  double last_sweep_abs_td = 0;
  for (int episode = 0; episode < 400; ++episode) {
    int s = 0;
    double abs_td = 0;
    for (;;) {
      const auto m = chain.model(s, ChainMdp::kRight);
      const double delta = td_error(m.reward, discount, m.terminal ? 0.0 : v[m.next_state], v[s], m.terminal);
      v[s] += alpha * delta;
      abs_td += std::abs(delta);
      if (m.terminal) break;
      s = m.next_state;
    }
    last_sweep_abs_td = abs_td / cc.states;
  }
  EXPECT_LT(last_sweep_abs_td, 1e-2);
  for (int s = 0; s < cc.states; ++s) EXPECT_NEAR(v[s], cc.r_goal * std::pow(discount, cc.states - 1 - s), 1e-2);
}

TEST(ActorSignal, ZeroTdErrorKeepsOutput) {
  const VectorXd a = vec({0.1, -0.3});
  const auto s = actor_training_signal(a, vec({0.2, 0.05}), 0.0, 3.0);
  EXPECT_EQ(s.target, a);
  EXPECT_TRUE(s.mask.all());
}

TEST(ActorSignal, FormulaExample) {
  const auto s = actor_training_signal(vec({0.1, -0.2}), vec({0.05, 0.05}), 1.0, 1.0);
  EXPECT_NEAR(s.target[0], 0.15, 1e-15);
  EXPECT_NEAR(s.target[1], -0.15, 1e-15);
}

TEST(ActorSignal, SignOfTdErrorSetsDirection) {
  const VectorXd a = vec({0.0});
  EXPECT_GT(actor_training_signal(a, vec({0.1}), 0.5, 1.0).target[0], 0.0);
  EXPECT_LT(actor_training_signal(a, vec({0.1}), -0.5, 1.0).target[0], 0.0);
  EXPECT_EQ(actor_training_signal(a, vec({0.1}), 100.0, 1.0).target[0], 0.5);
  EXPECT_THROW(actor_training_signal(a, vec({0.1, 0.2}), 1.0, 1.0), ShapeError);
}

TEST(SelectDiscrete, GreedyAndTieBreak) {
  Rng rng = make_stream(1, "x");
  EXPECT_EQ(select_discrete(vec({0.2, 0.7}), 0.0, rng), 1);
  EXPECT_EQ(select_discrete(vec({0.5, 0.5}), 0.0, rng), 0);
  EXPECT_EQ(select_discrete(vec({0.1, 0.5, 0.5}), 0.0, rng), 1);
  EXPECT_THROW(select_discrete(VectorXd(), 0.0, rng), ShapeError);
}

TEST(SelectDiscrete, UniformExplorationFrequencies) {
  Rng rng = make_stream(2, "x");
  const int n = 100000;
  std::array<int, 4> counts{};
  for (int i = 0; i < n; ++i) ++counts[select_discrete(vec({0.1, 0.9, 0.3, 0.2}), 1.0, rng)];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int c : counts) EXPECT_LT(std::abs(c - n * 0.25), 3 * sigma);
}

TEST(SelectDiscrete, PartialExplorationMixesGreedyAndUniform) {
  Rng rng = make_stream(3, "x");
  const int n = 100000;
  const double eps = 0.3;
  std::array<int, 3> counts{};
  for (int i = 0; i < n; ++i) ++counts[select_discrete(vec({0.1, 0.9, 0.3}), eps, rng)];
  const std::array<double, 3> p{eps / 3, 1 - eps + eps / 3, eps / 3};
  for (int k = 0; k < 3; ++k) EXPECT_LT(std::abs(counts[k] - n * p[k]), 4 * std::sqrt(n * p[k] * (1 - p[k])));
}

TEST(SelectDiscrete, GreedyChoiceIgnoresConstantShift) {
  Rng values = make_stream(4, "values");
  for (int trial = 0; trial < 200; ++trial) {
    const VectorXd q = e2erl::testing::random_vector(5, values);
    const double shift = uniform(values, -10, 10);
    Rng a = make_stream(trial, "x"), b = make_stream(trial, "x");
    EXPECT_EQ(select_discrete(q, 0.0, a), select_discrete((q.array() + shift).matrix(), 0.0, b));
  }
}

TEST(SelectDiscrete, SameGeneratorStateSameChoices) {
  Rng a = make_stream(5, "x"), b = make_stream(5, "x");
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(select_discrete(vec({0.1, 0.2, 0.3}), 0.5, a),
                                           select_discrete(vec({0.1, 0.2, 0.3}), 0.5, b));
}

TEST(ActorQDecide, CaptureBranchHasZeroNoise) {
  Rng rng = make_stream(6, "x");
  const Decision d = actor_q_decide(vec({0.3, 0.1, 0.2, -0.2}), actor_q_config(), 0.0, 0.5, rng);
  ASSERT_TRUE(std::holds_alternative<Discrete>(d.action));
  EXPECT_EQ(std::get<Discrete>(d.action).index, 0);
  EXPECT_EQ(d.applied_noise, VectorXd::Zero(2));
}

TEST(ActorQDecide, NoiselessMoveUsesActorOutputs) {
  Rng rng = make_stream(7, "x");
  const Decision d = actor_q_decide(vec({0.1, 0.3, 0.2, -0.15}), actor_q_config(), 0.0, 0.0, rng);
  ASSERT_TRUE(std::holds_alternative<Continuous>(d.action));
  EXPECT_EQ(std::get<Continuous>(d.action).motor, vec({0.2, -0.15}));
  EXPECT_EQ(d.applied_noise, VectorXd::Zero(2));
}

TEST(ActorQDecide, NoiseHasTheConfiguredSpread) {
  Rng rng = make_stream(8, "x");
  const int n = 10000;
  const double sigma = 0.05;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const Decision d = actor_q_decide(vec({0.0, 0.3, 0.1, -0.1}), actor_q_config(), 0.0, sigma, rng);
    for (Index k = 0; k < 2; ++k) {
      sum += d.applied_noise[k];
      sum2 += d.applied_noise[k] * d.applied_noise[k];
    }
  }
  const double m = sum / (2 * n);
  const double sd = std::sqrt(sum2 / (2 * n) - m * m);
  EXPECT_NEAR(sd, sigma, 0.05 * sigma);
}

TEST(ActorQDecide, NoiseRecordsTheClampedPerturbation) {
  Rng rng = make_stream(9, "x");
  const LearnerConfig config = actor_q_config();
  bool clamped = false;
  for (int i = 0; i < 2000; ++i) {
    const VectorXd outputs = vec({0.0, 0.3, 0.45, -0.45});
    const Decision d = actor_q_decide(outputs, config, 0.0, 0.3, rng);
    const VectorXd& motor = std::get<Continuous>(d.action).motor;
    EXPECT_LE(motor.cwiseAbs().maxCoeff(), config.motor_limit);
    EXPECT_EQ(d.applied_noise, motor - outputs.tail(2));
    clamped = clamped || motor.cwiseAbs().maxCoeff() == config.motor_limit;
  }
  EXPECT_TRUE(clamped);
}

TEST(ActorQDecide, ShortOutputIsAShapeError) {
  Rng rng = make_stream(10, "x");
  EXPECT_THROW(actor_q_decide(vec({0.1, 0.2, 0.3}), actor_q_config(), 0.0, 0.1, rng), ShapeError);
}

TEST(ComposeSignal, TerminalCaptureTrainsOnlyQCapture) {
  const LearnerConfig config = actor_q_config();
  const VectorXd outputs = vec({0.1, 0.2, 0.3, -0.1});
  const Transition t{VectorXd::Zero(3), Discrete{0}, VectorXd::Zero(2), 0.9, VectorXd::Zero(3), true};
  const TrainingSignal s = compose_signal(config, outputs, t, nullptr, 0.5);
  EXPECT_DOUBLE_EQ(s.target[0], 0.9 * config.q_scale);
  EXPECT_TRUE(s.mask[0]);
  EXPECT_FALSE(s.mask[1] || s.mask[2] || s.mask[3]);
  EXPECT_EQ(s.target.tail(3), outputs.tail(3));
}

TEST(ComposeSignal, MoveTrainsQMoveAndActorWithItsTdError) {
  const LearnerConfig config = actor_q_config();
  const double q = config.q_scale;
  const VectorXd outputs = vec({0.05, 0.1, 0.2, -0.2});
  const VectorXd next = vec({0.2, 0.15, 0.0, 0.0});
  const Transition t{VectorXd::Zero(3), Continuous{vec({0.3, -0.25})}, vec({0.1, -0.05}), 0.0, VectorXd::Zero(3),
                     false};
  const TrainingSignal s = compose_signal(config, outputs, t, &next, 0.5);
  const double delta = config.discount * 0.2 / q - 0.1 / q;
  EXPECT_NEAR(s.td_error, delta, 1e-15);
  EXPECT_FALSE(s.mask[0]);
  EXPECT_TRUE(s.mask[1] && s.mask[2] && s.mask[3]);
  EXPECT_NEAR(s.target[1], q * config.discount * 0.2 / q, 1e-15);
  EXPECT_NEAR(s.target[2], 0.2 + delta * 0.1, 1e-15);
  EXPECT_NEAR(s.target[3], -0.2 - delta * 0.05, 1e-15);
}

TEST(ComposeSignal, NonTerminalNeedsSuccessor) {
  const Transition t{VectorXd::Zero(3), Discrete{0}, VectorXd::Zero(2), 0.0, VectorXd::Zero(3), false};
  EXPECT_THROW(compose_signal(actor_q_config(), vec({0, 0, 0, 0}), t, nullptr, 0.5), LifecycleError);
}

TEST(ComposeSignal, MaskedOutputsDoNotInfluenceTheUpdate) {
  const LearnerConfig config = actor_q_config();
  const Transition t{VectorXd::Zero(3), Discrete{0}, VectorXd::Zero(2), 0.9, VectorXd::Zero(3), true};
  const TrainingSignal a = compose_signal(config, vec({0.1, 0.2, 0.3, -0.1}), t, nullptr, 0.5);
  const TrainingSignal b = compose_signal(config, vec({0.1, -0.4, 0.0, 0.45}), t, nullptr, 0.5);
  EXPECT_EQ(a.target[0], b.target[0]);
  EXPECT_TRUE((a.mask == b.mask).all());
}

TEST(LearnStep, ConsistentPredictionIsAFixedPoint) {
  LearnerConfig config;
  config.kind = LearnerKind::QLearning;
  config.discount = 0.9;
  auto net = tabular_net(2, 2);
  // Q(s0, right) = 0.9 * Q(s1, .) max with Q(s1) = (0.25, 0.5).
  net.weights[0](1, 0) = config.q_scale * 0.25;
  net.weights[0](1, 1) = config.q_scale * 0.5;
  net.weights[0](0, 1) = config.q_scale * 0.45;
  const auto before = net;
  EpisodeTrace<double> trace;
  const Transition t{vec({1, 0}), Discrete{1}, VectorXd(), 0.0, vec({0, 1}), false};
  const TrainingSignal s = learn_step(config, t, net, trace);
  EXPECT_NEAR(s.td_error, 0.0, 1e-15);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) EXPECT_NEAR(net.weights[0](i, j), before.weights[0](i, j), 1e-16);
}

TEST(LearnStep, RecurrentNetNeedsTheMatchingTrace) {
  const auto net0 = e2erl::testing::random_network({3, 4, 4}, true, 1);
  auto net = net0;
  EpisodeTrace<double> trace;
  const Transition t{vec({1, 0, 0}), Discrete{0}, VectorXd::Zero(2), 0.9, vec({0, 1, 0}), true};
  EXPECT_THROW(learn_step(actor_q_config(), t, net, trace), IntegrityError);
  trace.record(vec({0, 0, 1}), VectorXd::Zero(4), VectorXd::Zero(4));
  EXPECT_THROW(learn_step(actor_q_config(), t, net, trace), IntegrityError);
  trace.record(vec({1, 0, 0}), VectorXd::Zero(4), rnn_step(net, RnnState<double>::zero(net), vec({1, 0, 0})).output);
  EXPECT_NO_THROW(learn_step(actor_q_config(), t, net, trace));
  EXPECT_EQ(net, net0);  // recurrent nets only learn at episode end
  EXPECT_TRUE(trace.steps.back().mask[0]);
}

TEST(LearnStep, OneHotLinearNetIsTabularQLearning) {
  LearnerConfig config;
  config.kind = LearnerKind::QLearning;
  config.discount = 0.9;
  config.lr_net = 0.5;
  ChainConfig cc;
  ChainMdp chain(cc);
  auto net = tabular_net(cc.states, 2);
  std::vector<std::array<double, 2>> table(cc.states, {0.0, 0.0});
  EpisodeTrace<double> unused;

  Rng env_rng = make_stream(11, "env"), explore = make_stream(11, "explore");
  const auto q_star = chain_q_star(chain, cc.states, config.discount);
  long updates = 0;
  double worst_step_gap = 0;
  while (updates < 20000) {
    EnvOutcome cur = chain.reset(env_rng);
    for (;;) {
      const int s = chain.state();
      const int a = select_discrete(forward_layered(net, cur.observation), 0.5, explore);
      const EnvOutcome next = chain.step(Discrete{a}, env_rng);
      // Timeouts are truncations, so they still bootstrap.
      const bool goal = next.outcome == Outcome::Goal;
      const Transition t{cur.observation, Discrete{a}, VectorXd(), next.reward, next.observation, goal};
      learn_step(config, t, net, unused);
      // Textbook update with alpha equal to the learning rate.
      const double target =
          goal ? next.reward
                        : next.reward + config.discount * std::max(table[chain.state()][0], table[chain.state()][1]);
      table[s][a] += config.lr_net * (target - table[s][a]);
      ++updates;
      for (int i = 0; i < cc.states; ++i)
        for (int k = 0; k < 2; ++k)
          worst_step_gap = std::max(worst_step_gap, std::abs(net.weights[0](i, k) / config.q_scale - table[i][k]));
      if (next.terminal) break;
      cur = next;
    }
  }
  EXPECT_LT(worst_step_gap, 1e-10);
  double worst = 0;
  for (int s = 0; s < cc.states; ++s)
    for (int k = 0; k < 2; ++k) worst = std::max(worst, std::abs(net.weights[0](s, k) / config.q_scale - q_star[s][k]));
  EXPECT_LT(worst, 1e-2);
}

TEST(LearnStep, GreedyChainTargetsMatchValueIteration) {
  LearnerConfig config;
  config.kind = LearnerKind::QLearning;
  config.discount = 0.9;
  config.lr_net = 0.5;
  ChainConfig cc;
  ChainMdp chain(cc);
  auto net = tabular_net(cc.states, 2);
  EpisodeTrace<double> unused;
  Rng env_rng = make_stream(12, "env"), explore = make_stream(12, "explore");
  for (int episode = 0; episode < 2000; ++episode) {
    EnvOutcome cur = chain.reset(env_rng);
    for (;;) {
      const int a = select_discrete(forward_layered(net, cur.observation), 0.3, explore);
      const EnvOutcome next = chain.step(Discrete{a}, env_rng);
      learn_step(config, {cur.observation, Discrete{a}, VectorXd(), next.reward, next.observation, next.terminal},
                 net, unused);
      if (next.terminal) break;
      cur = next;
    }
  }
  const auto q_star = chain_q_star(chain, cc.states, config.discount);
  EnvOutcome cur = chain.reset(env_rng);
  for (;;) {
    const int s = chain.state();
    const VectorXd q = forward_layered(net, cur.observation);
    const int a = select_discrete(q, 0.0, explore);
    const EnvOutcome next = chain.step(Discrete{a}, env_rng);
    const double target =
        q_target(next.reward, config.discount,
                 next.terminal ? 0.0 : forward_layered(net, next.observation).maxCoeff() / config.q_scale,
                 next.terminal);
    EXPECT_NEAR(target, q_star[s][a], 1e-3) << "state " << s;
    if (next.terminal) break;
    cur = next;
  }
}

TEST(ActorCritic, ReachingDistanceShrinksOverTraining) {
  Reach1dConfig rc;
  Reach1dTask task(rc);
  LearnerConfig config;
  config.kind = LearnerKind::ActorCritic;
  config.discrete_actions = 0;
  config.motor_size = 1;
  config.lr_net = 0.1;
  config.actor_gain = 20;
  NetworkShape shape{{task.observation_size(), 20, config.output_size()}};
  InitOptions init;
  init.range = 0.5;
  Rng init_rng = make_stream(3, "init"), env_rng = make_stream(3, "env"), explore = make_stream(3, "explore");
  auto net = init_random<double>(shape, init, init_rng);

  const int windows = 3, window = 1000;
  std::vector<double> mean_distance;
  for (int w = 0; w < windows; ++w) {
    double sum = 0;
    for (int e = 0; e < window; ++e) {
      EpisodeOptions options;
      options.learn = true;
      options.sigma = 0.1;
      run_episode(task, net, config, env_rng, explore, options);
      sum += std::abs(task.position() - task.target());
    }
    mean_distance.push_back(sum / window);
  }
  for (int w = 1; w < windows; ++w)
    EXPECT_LT(mean_distance[w], mean_distance[w - 1]) << "window " << w << " of " << ::testing::PrintToString(mean_distance);
}
