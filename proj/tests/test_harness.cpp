#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "e2erl/checkpoint.hpp"
#include "e2erl/config.hpp"
#include "e2erl/harness.hpp"
#include "test_support.hpp"

using namespace e2erl;
using e2erl::testing::config_from;
using e2erl::testing::scratch_dir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json chain_doc() {
  return {{"task", {{"name", "chain_mdp"}}},
          {"network", {{"hidden", {8}}, {"recurrent", false}}},
          {"learner", {{"kind", "q_learning"}, {"lr_net", 0.5}}},
          {"episodes", 1000},
          {"eval_every", 250},
          {"eval_episodes", 5},
          {"seed", 3}};
}

json small_capture_doc() {
  return {{"task", {{"name", "capture"}}},
          {"network", {{"hidden", {6}}, {"recurrent", true}}},
          {"learner", {{"kind", "actor_q"}, {"lr_net", 0.2}}},
          {"episodes", 300},
          {"eval_every", 100},
          {"eval_episodes", 20},
          {"seed", 9}};
}

std::vector<std::string> deterministic_files(const fs::path& dir) {
  std::vector<std::string> names{run_files::kConfig, run_files::kEpisodes, run_files::kEvals};
  for (const auto& e : fs::directory_iterator(dir / run_files::kCheckpoints))
    names.push_back(std::string(run_files::kCheckpoints) + "/" + e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

void expect_same_files(const fs::path& a, const fs::path& b, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    ASSERT_TRUE(fs::exists(b / name)) << name;
    EXPECT_EQ(read_file(a / name), read_file(b / name)) << name;
  }
}

ExperimentConfig in_dir(json doc, const fs::path& dir) {
  doc["output_dir"] = dir.string();
  return config_from(doc);
}

}  // namespace

TEST(Config, RoundTripsThroughText) {
  ExperimentConfig c = config_from(small_capture_doc());
  c.learner.epsilon = {0.3, 0.01, 77};
  c.network.init.identity_gain = 0.7;
  std::get<CaptureConfig>(c.task.params).invisible_width = {0.125, 0.25};
  const std::string text = dump_config(c);
  const ExperimentConfig back = parse_config(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(dump_config(back), text);
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  json doc = chain_doc();
  doc["learner"]["learning_rate"] = 0.1;
  EXPECT_THROW(config_from(doc), ConfigError);
  doc = chain_doc();
  doc["task"]["params"] = {{"statez", 5}};
  EXPECT_THROW(config_from(doc), ConfigError);
  doc = chain_doc();
  doc["task"]["name"] = "pong";
  EXPECT_THROW(config_from(doc), ConfigError);
  doc = chain_doc();
  doc["learner"]["discount"] = 1.0;
  EXPECT_THROW(config_from(doc).validate(), ConfigError);
  EXPECT_THROW(parse_config("{ not json"), ConfigError);
}

TEST(RunExperiment, ZeroEpisodesWritesOnlyManifestAndInitialCheckpoint) {
  const fs::path dir = scratch_dir("zero");
  json doc = chain_doc();
  doc["episodes"] = 0;
  const RunStatus status = run_experiment(in_dir(doc, dir));
  EXPECT_TRUE(status.complete);
  EXPECT_EQ(status.episodes_completed, 0);
  EXPECT_TRUE(fs::exists(dir / run_files::kManifest));
  EXPECT_TRUE(fs::exists(checkpoint_path(dir, 0)));
  EXPECT_EQ(read_file(dir / run_files::kEpisodes), "");
  EXPECT_EQ(read_file(dir / run_files::kEvals), "");
  EXPECT_EQ(std::distance(fs::directory_iterator(dir / run_files::kCheckpoints), fs::directory_iterator{}), 1);
}

TEST(RunExperiment, RefusesToOverwriteARun) {
  const fs::path dir = scratch_dir("overwrite");
  json doc = chain_doc();
  doc["episodes"] = 10;
  run_experiment(in_dir(doc, dir));
  EXPECT_THROW(run_experiment(in_dir(doc, dir)), std::runtime_error);
}

TEST(RunExperiment, RepeatedRunsAreByteIdentical) {
  const fs::path a = scratch_dir("repeat-a"), b = scratch_dir("repeat-b");
  // Same output_dir string is part of the config, so run both from one path.
  const fs::path shared = scratch_dir("repeat-shared");
  run_experiment(in_dir(small_capture_doc(), shared));
  fs::rename(shared, a / "run");
  fs::create_directories(shared);
  run_experiment(in_dir(small_capture_doc(), shared));
  fs::rename(shared, b / "run");
  expect_same_files(a / "run", b / "run", deterministic_files(a / "run"));
  EXPECT_EQ(deterministic_files(a / "run"), deterministic_files(b / "run"));
}

TEST(RunExperiment, EpisodeLogsMatchTheConfiguredCount) {
  const fs::path dir = scratch_dir("count");
  run_experiment(in_dir(small_capture_doc(), dir));
  const auto logs = read_episode_logs(dir);
  ASSERT_EQ(logs.size(), 300u);
  for (std::size_t i = 0; i < logs.size(); ++i) {
    EXPECT_EQ(logs[i].episode, static_cast<long>(i));
    EXPECT_NE(logs[i].outcome, Outcome::Running);
    EXPECT_GE(logs[i].steps, 1);
  }
  EXPECT_TRUE(fs::exists(checkpoint_path(dir, 300)));
}

TEST(Resume, InterruptedRunMatchesUninterruptedRun) {
  for (long stop : {100L, 137L}) {
    const fs::path whole = scratch_dir("resume-whole"), parts = scratch_dir("resume-parts");
    const fs::path shared = scratch_dir("resume-shared");
    run_experiment(in_dir(small_capture_doc(), shared));
    fs::rename(shared, whole / "run");

    fs::create_directories(shared);
    RunOptions options;
    options.stop_after = stop;
    const RunStatus first = run_experiment(in_dir(small_capture_doc(), shared), options);
    EXPECT_FALSE(first.complete);
    EXPECT_EQ(first.episodes_completed, stop);
    const RunStatus second = resume(shared);
    EXPECT_TRUE(second.complete);
    fs::rename(shared, parts / "run");

    auto names = deterministic_files(whole / "run");
    expect_same_files(whole / "run", parts / "run", names);
  }
}

TEST(Resume, CompletedRunIsANoOpWithNotice) {
  const fs::path dir = scratch_dir("resume-done");
  json doc = chain_doc();
  doc["episodes"] = 50;
  doc["eval_every"] = 50;
  run_experiment(in_dir(doc, dir));
  const std::string before = read_file(dir / run_files::kEpisodes);
  const RunStatus status = resume(dir);
  EXPECT_TRUE(status.complete);
  EXPECT_FALSE(status.notice.empty());
  EXPECT_EQ(read_file(dir / run_files::kEpisodes), before);
}

TEST(Resume, TamperedCheckpointIsRejectedBeforeTraining) {
  const fs::path dir = scratch_dir("resume-tamper");
  RunOptions options;
  options.stop_after = 120;
  run_experiment(in_dir(small_capture_doc(), dir), options);
  const fs::path ckpt = latest_checkpoint(dir);
  std::string text = read_file(ckpt);
  const auto pos = text.find("weights") + 30;
  text[pos] = text[pos] == '3' ? '4' : '3';
  write_file_atomic(ckpt, text);
  const std::string episodes = read_file(dir / run_files::kEpisodes);
  EXPECT_THROW(resume(dir), IntegrityError);
  EXPECT_EQ(read_file(dir / run_files::kEpisodes), episodes);
}

TEST(RunExperiment, ChainReachesTheOptimalReturn) {
  const fs::path dir = scratch_dir("chain");
  json doc = chain_doc();
  doc["episodes"] = 20000;
  doc["eval_every"] = 5000;
  run_experiment(in_dir(doc, dir));
  const ExperimentConfig config = load_run_config(dir);
  const RunCheckpoint ckpt = load_run_checkpoint(latest_checkpoint(dir));
  EXPECT_EQ(ckpt.episode, 20000);
  const EvalSummary summary = evaluate(ckpt.net, config.task, config.learner, 20, 77);
  // The chain is deterministic, so the optimal undiscounted return is r_goal.
  EXPECT_NEAR(summary.mean_return, 0.9, 1e-2);
  EXPECT_EQ(summary.success_rate, 1.0);
}

TEST(Evaluate, UntrainedNetMatchesTheRandomBaseline) {
  const ExperimentConfig config = config_from(small_capture_doc());
  const CaptureConfig& cc = std::get<CaptureConfig>(config.task.params);
  const long per_net = 100, nets = 20;
  double successes = 0;
  for (long k = 0; k < nets; ++k) {
    Rng init = make_stream(k, "init");
    const auto net = init_random<double>(config.network_shape(), config.network.init, init);
    successes += evaluate(net, config.task, config.learner, per_net, 1000 + k).success_rate * per_net;
  }
  const double n1 = per_net * nets, n2 = 4000;
  const double p_net = successes / n1;
  const double p_base = e2erl::testing::random_capture_baseline(cc, static_cast<long>(n2), 5);
  const double pooled = (successes + p_base * n2) / (n1 + n2);
  const double se = std::sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2));
  EXPECT_LE(std::abs(p_net - p_base), 4 * se + 1e-12) << "net " << p_net << " baseline " << p_base;
}

TEST(Evaluate, IsRepeatableAndDoesNotTouchTheNet) {
  const ExperimentConfig config = config_from(small_capture_doc());
  Rng init = make_stream(1, "init");
  const auto net = init_random<double>(config.network_shape(), config.network.init, init);
  const auto copy = net;
  const EvalSummary a = evaluate(net, config.task, config.learner, 50, 4, true);
  const EvalSummary b = evaluate(net, config.task, config.learner, 50, 4, true);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.trajectories, b.trajectories);
  EXPECT_EQ(net, copy);
  long steps = 0;
  for (const auto& r : a.trajectories) steps += r.terminal;
  EXPECT_EQ(steps, 50);
}

TEST(Evaluate, MismatchedNetIsACheckpointError) {
  const ExperimentConfig config = config_from(small_capture_doc());
  const auto net = e2erl::testing::random_network({7, 6, 4}, true, 1);
  EXPECT_THROW(evaluate(net, config.task, config.learner, 5, 1), CheckpointError);
  const auto wrong_outputs = e2erl::testing::random_network({80, 6, 3}, true, 1);
  EXPECT_THROW(evaluate(wrong_outputs, config.task, config.learner, 5, 1), CheckpointError);
}

TEST(RunExperiment, MemoryCueWithoutDelayIsLearnedByAFeedforwardNet) {
  const fs::path dir = scratch_dir("memory0");
  json doc = {{"task", {{"name", "memory_cue"}, {"params", {{"delay", 0}}}}},
              {"network", {{"hidden", {10}}, {"recurrent", false}}},
              {"learner", {{"kind", "q_learning"}, {"lr_net", 0.3}}},
              {"episodes", 3000},
              {"eval_every", 1000},
              {"eval_episodes", 500},
              {"seed", 4}};
  run_experiment(in_dir(doc, dir));
  std::ifstream evals(dir / run_files::kEvals);
  std::string line, last;
  while (std::getline(evals, line)) last = line;
  EXPECT_GE(json::parse(last).at("success_rate").get<double>(), 0.95);
}

TEST(RunExperiment, NonFiniteWeightsAbortWithDiagnosticCheckpoint) {
  const fs::path dir = scratch_dir("diverge");
  json doc = chain_doc();
  doc["network"]["output_activation"] = {{"kind", "linear"}};
  doc["learner"]["lr_net"] = 1e300;
  EXPECT_THROW(run_experiment(in_dir(doc, dir)), NumericalError);
  bool found = false;
  for (const auto& e : fs::directory_iterator(dir / run_files::kCheckpoints))
    found = found || e.path().filename().string().rfind("diagnostic-", 0) == 0;
  EXPECT_TRUE(found);
  EXPECT_EQ(json::parse(read_file(dir / run_files::kManifest)).at("status"), "aborted");
}

TEST(Trajectories, RoundTripThroughJsonLines) {
  const ExperimentConfig config = config_from(small_capture_doc());
  Rng init = make_stream(2, "init");
  const auto net = init_random<double>(config.network_shape(), config.network.init, init);
  const EvalSummary s = evaluate(net, config.task, config.learner, 10, 4, true);
  const fs::path dir = scratch_dir("traj");
  write_trajectories(dir / "t.jsonl", s.trajectories);
  EXPECT_EQ(read_trajectories(dir / "t.jsonl"), s.trajectories);
}
