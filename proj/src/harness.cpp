#include "e2erl/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <regex>
#include <sstream>

#include "e2erl/checkpoint.hpp"

namespace e2erl {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// records

json EpisodeLog::to_json() const {
  return {{"episode", episode},
          {"return", episode_return},
          {"outcome", to_string(outcome)},
          {"steps", steps},
          {"mean_abs_td", mean_abs_td}};
}

EpisodeLog EpisodeLog::from_json(const json& doc) {
  return {doc.at("episode").get<long>(), doc.at("return").get<double>(),
          outcome_from_string(doc.at("outcome").get<std::string>()), doc.at("steps").get<long>(),
          doc.at("mean_abs_td").get<double>()};
}

json TrajectoryRecord::to_json() const {
  return {{"episode", episode}, {"step", step},       {"agent_y", agent_y},
          {"object_x", object_x}, {"object_y", object_y}, {"visible", visible},
          {"action", action},   {"motor", motor},     {"reward", reward},
          {"terminal", terminal}, {"outcome", to_string(outcome)}};
}

TrajectoryRecord TrajectoryRecord::from_json(const json& doc) {
  TrajectoryRecord r;
  r.episode = doc.at("episode").get<long>();
  r.step = doc.at("step").get<long>();
  r.agent_y = doc.at("agent_y").get<double>();
  r.object_x = doc.at("object_x").get<double>();
  r.object_y = doc.at("object_y").get<double>();
  r.visible = doc.at("visible").get<bool>();
  r.action = doc.at("action").get<std::string>();
  r.motor = doc.at("motor").get<std::vector<double>>();
  r.reward = doc.at("reward").get<double>();
  r.terminal = doc.at("terminal").get<bool>();
  r.outcome = outcome_from_string(doc.at("outcome").get<std::string>());
  return r;
}

json EvalSummary::to_json() const {
  return {{"episodes", episodes},
          {"success_rate", success_rate},
          {"mean_return", mean_return},
          {"mean_steps", mean_steps}};
}

// ---------------------------------------------------------------------------
// episode loop

EpisodeResult run_episode(Environment& env, NetworkWeights<double>& net, const LearnerConfig& learner,
                          Rng& env_rng, Rng& explore_rng, const EpisodeOptions& options) {
  EnvOutcome current = env.reset(env_rng);
  const bool recurrent = net.is_recurrent();
  RnnState<double> state = recurrent ? RnnState<double>::zero(net) : RnnState<double>{};
  EpisodeTrace<double> trace;
  std::optional<RnnStepResult<double>> pending;
  EpisodeResult result;
  double td_sum = 0;

  for (;;) {
    VectorXd outputs;
    if (recurrent) {
      RnnStepResult<double> r = pending ? std::move(*pending) : rnn_step(net, state, current.observation);
      pending.reset();
      if (options.learn) trace.record(current.observation, state.hidden, r.output);
      state = std::move(r.state);
      outputs = std::move(r.output);
    } else {
      outputs = forward_layered(net, current.observation);
    }
    if (!outputs.allFinite()) throw NumericalError("network produced non-finite outputs");
    if (options.observer) options.observer(recurrent ? state.hidden : VectorXd(), current.info);

    const Decision decision = decide(outputs, learner, options.epsilon, options.sigma, explore_rng);
    EnvOutcome next = env.step(decision.action, env_rng);
    ++result.steps;
    result.episode_return += next.reward;

    if (options.learn) {
      const Transition transition{current.observation, decision.action, decision.applied_noise,
                                  next.reward,         next.observation, next.terminal};
      const VectorXd* next_outputs = nullptr;
      if (recurrent && !next.terminal) {
        pending = rnn_step(net, state, next.observation);
        next_outputs = &pending->output;
      }
      td_sum += std::abs(learn_step(learner, transition, net, trace, next_outputs).td_error);
    }

    if (options.trajectory) {
      TrajectoryRecord rec;
      rec.episode = options.episode_index;
      rec.step = current.info.step;
      rec.agent_y = current.info.agent_y;
      rec.object_x = current.info.object_x;
      rec.object_y = current.info.object_y;
      rec.visible = current.info.visible;
      rec.action = env.action_label(decision.action);
      if (const auto* c = std::get_if<Continuous>(&decision.action))
        rec.motor.assign(c->motor.data(), c->motor.data() + c->motor.size());
      rec.reward = next.reward;
      rec.terminal = next.terminal;
      rec.outcome = next.outcome;
      options.trajectory->push_back(std::move(rec));
    }

    if (next.terminal) {
      result.outcome = next.outcome;
      break;
    }
    current = std::move(next);
  }

  if (options.learn) {
    result.loss = finish_episode(learner, net, trace);
    if (!net.all_finite() || !std::isfinite(result.loss))
      throw NumericalError("non-finite weights after episode " + std::to_string(options.episode_index));
  }
  result.mean_abs_td = options.learn ? td_sum / static_cast<double>(result.steps) : 0.0;
  return result;
}

void check_compatible(const NetworkWeights<double>& net, const TaskConfig& task, const LearnerConfig& learner) {
  const auto env = make_task(task);
  if (net.input_size() != env->observation_size())
    throw CheckpointError("checkpoint expects " + std::to_string(net.input_size()) + " inputs, task '" +
                          task.name() + "' provides " + std::to_string(env->observation_size()));
  if (net.output_size() != learner.output_size())
    throw CheckpointError("checkpoint has " + std::to_string(net.output_size()) + " outputs, learner needs " +
                          std::to_string(learner.output_size()));
}

EvalSummary evaluate(const NetworkWeights<double>& net, const TaskConfig& task, const LearnerConfig& learner,
                     long episodes, std::uint64_t seed, bool keep_trajectories) {
  check_compatible(net, task, learner);
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  const auto env = make_task(task);
  NetworkWeights<double> frozen = net;
  Rng env_rng = make_stream(seed, "eval-environment");
  Rng explore_rng = make_stream(seed, "eval-exploration");
  EvalSummary summary;
  summary.episodes = episodes;
  double successes = 0, returns = 0, steps = 0;
  for (long e = 0; e < episodes; ++e) {
    EpisodeOptions options;
    options.episode_index = e;
    options.trajectory = keep_trajectories ? &summary.trajectories : nullptr;
    const EpisodeResult r = run_episode(*env, frozen, learner, env_rng, explore_rng, options);
    successes += is_success(r.outcome) ? 1.0 : 0.0;
    returns += r.episode_return;
    steps += static_cast<double>(r.steps);
  }
  const double n = static_cast<double>(episodes);
  summary.success_rate = successes / n;
  summary.mean_return = returns / n;
  summary.mean_steps = steps / n;
  return summary;
}

EvalSummary evaluate_run_point(const NetworkWeights<double>& net, const ExperimentConfig& config) {
  return evaluate(net, config.task, config.learner, config.eval_episodes, config.seed ^ 0x5eedULL);
}

// ---------------------------------------------------------------------------
// checkpoints

std::string serialize_run_checkpoint(const RunCheckpoint& c) {
  std::ostringstream out;
  out << "e2erl-run-checkpoint 1\n"
      << "episode " << c.episode << '\n'
      << "config_hash " << c.config_hash << '\n'
      << "rng_init " << serialize_rng(c.streams.init) << '\n'
      << "rng_exploration " << serialize_rng(c.streams.exploration) << '\n'
      << "rng_environment " << serialize_rng(c.streams.environment) << '\n';
  write_network(out, c.net);
  return seal_document(out.str());
}

RunCheckpoint deserialize_run_checkpoint(const std::string& text) {
  std::istringstream in(unseal_document(text));
  auto field = [&](const std::string& key) {
    std::string line;
    if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0)
      throw IntegrityError("run checkpoint: expected '" + key + "'");
    return line.substr(key.size() + 1);
  };
  if (field("e2erl-run-checkpoint") != "1") throw IntegrityError("run checkpoint: unsupported version");
  RunCheckpoint c;
  try {
    c.episode = std::stol(field("episode"));
  } catch (const std::logic_error&) {
    throw IntegrityError("run checkpoint: bad episode number");
  }
  c.config_hash = field("config_hash");
  c.streams.init = deserialize_rng(field("rng_init"));
  c.streams.exploration = deserialize_rng(field("rng_exploration"));
  c.streams.environment = deserialize_rng(field("rng_environment"));
  c.net = read_network(in);
  return c;
}

fs::path checkpoint_path(const fs::path& run_dir, long episode) {
  char name[40];
  std::snprintf(name, sizeof(name), "ckpt-%08ld.txt", episode);
  return run_dir / run_files::kCheckpoints / name;
}

fs::path latest_checkpoint(const fs::path& run_dir) {
  const fs::path dir = run_dir / run_files::kCheckpoints;
  if (!fs::is_directory(dir)) throw CheckpointError("no checkpoints in " + run_dir.string());
  static const std::regex pattern(R"(ckpt-(\d{8})\.txt)");
  long best = -1;
  fs::path found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      const long episode = std::stol(m[1].str());
      if (episode > best) {
        best = episode;
        found = entry.path();
      }
    }
  }
  if (best < 0) throw CheckpointError("no checkpoints in " + run_dir.string());
  return found;
}

RunCheckpoint load_run_checkpoint(const fs::path& path) { return deserialize_run_checkpoint(read_file(path)); }

ExperimentConfig load_run_config(const fs::path& run_dir) {
  const fs::path path = run_dir / run_files::kConfig;
  if (!fs::exists(path)) throw ConfigError(run_dir.string() + " is not a run directory (no config.json)");
  return load_config(path);
}

std::vector<EpisodeLog> read_episode_logs(const fs::path& run_dir) {
  const fs::path path = run_dir / run_files::kEpisodes;
  if (!fs::exists(path)) throw NoDataError("no episode log in " + run_dir.string());
  std::ifstream in(path);
  std::vector<EpisodeLog> logs;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) logs.push_back(EpisodeLog::from_json(json::parse(line)));
  return logs;
}

std::vector<TrajectoryRecord> read_trajectories(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NoDataError("cannot read trajectories from " + path.string());
  std::vector<TrajectoryRecord> records;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) records.push_back(TrajectoryRecord::from_json(json::parse(line)));
  return records;
}

void write_trajectories(const fs::path& path, const std::vector<TrajectoryRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) out << r.to_json().dump() << '\n';
  write_file_atomic(path, out.str());
}

// ---------------------------------------------------------------------------
// runs

namespace {

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void write_manifest(const fs::path& dir, const ExperimentConfig& config, long completed, const std::string& status) {
  json manifest = json::object();
  const fs::path path = dir / run_files::kManifest;
  if (fs::exists(path)) {
    try {
      manifest = json::parse(read_file(path));
    } catch (const json::exception&) {
      manifest = json::object();
    }
  }
  if (!manifest.contains("created")) manifest["created"] = timestamp();
  manifest["updated"] = timestamp();
  manifest["config_hash"] = config_hash(config);
  manifest["seed"] = config.seed;
  manifest["episodes_target"] = config.episodes;
  manifest["episodes_completed"] = completed;
  manifest["status"] = status;
  write_file_atomic(path, manifest.dump(2) + "\n");
}

void write_checkpoint(const fs::path& dir, const ExperimentConfig& config, long episode, const RngStreams& streams,
                      const NetworkWeights<double>& net) {
  write_file_atomic(checkpoint_path(dir, episode),
                    serialize_run_checkpoint({episode, config_hash(config), streams, net}));
}

void append_line(std::ofstream& out, const json& record) {
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw std::runtime_error("failed to append to a run log");
}

RunStatus train_session(const fs::path& dir, const ExperimentConfig& config, RunCheckpoint state,
                        const RunOptions& options) {
  std::ofstream episodes_out(dir / run_files::kEpisodes, std::ios::app);
  std::ofstream evals_out(dir / run_files::kEvals, std::ios::app);
  if (!episodes_out || !evals_out) throw std::runtime_error("cannot open logs in " + dir.string());
  const auto env = make_task(config.task);
  auto& net = state.net;
  auto& streams = state.streams;
  const long start = state.episode;
  long done = start;
  bool checkpointed = true;

  for (long e = start; e < config.episodes; ++e) {
    if (options.stop_after && e - start >= *options.stop_after) break;
    EpisodeOptions episode;
    episode.learn = true;
    episode.episode_index = e;
    episode.epsilon = config.learner.epsilon.at(e, config.episodes);
    episode.sigma = config.learner.noise_sigma.at(e, config.episodes);
    EpisodeResult r;
    try {
      r = run_episode(*env, net, config.learner, streams.environment, streams.exploration, episode);
    } catch (const NumericalError&) {
      const fs::path diag = dir / run_files::kCheckpoints / ("diagnostic-" + std::to_string(e) + ".txt");
      std::ostringstream doc;
      write_network(doc, net);
      write_file_atomic(diag, seal_document(doc.str()));
      write_manifest(dir, config, done, "aborted");
      throw;
    }
    append_line(episodes_out, EpisodeLog{e, r.episode_return, r.outcome, r.steps, r.mean_abs_td}.to_json());
    done = e + 1;
    checkpointed = false;
    if (done % config.eval_every == 0 || done == config.episodes) {
      const EvalSummary summary = evaluate_run_point(net, config);
      json record = summary.to_json();
      record["episode"] = done;
      append_line(evals_out, record);
      write_checkpoint(dir, config, done, streams, net);
      checkpointed = true;
      write_manifest(dir, config, done, done == config.episodes ? "complete" : "running");
      if (options.log)
        options.log("episode " + std::to_string(done) + ": greedy success " +
                    format_double(summary.success_rate) + ", mean return " + format_double(summary.mean_return));
    }
  }

  RunStatus status{dir, done, done == config.episodes, ""};
  if (!status.complete) {
    if (options.checkpoint_on_stop && !checkpointed) write_checkpoint(dir, config, done, streams, net);
    write_manifest(dir, config, done, "interrupted");
    status.notice = "stopped after episode " + std::to_string(done);
  } else {
    write_manifest(dir, config, done, "complete");
  }
  return status;
}

void truncate_lines(const fs::path& path, const std::function<bool(const std::string&, std::size_t)>& keep) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::ostringstream out;
  std::size_t index = 0;
  for (std::string line; std::getline(in, line); ++index) {
    if (line.empty()) continue;
    if (!keep(line, index)) break;
    out << line << '\n';
  }
  in.close();
  write_file_atomic(path, out.str());
}

}  // namespace

RunStatus run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const fs::path dir = config.output_dir;
  if (fs::exists(dir / run_files::kManifest))
    throw std::runtime_error(dir.string() + " already holds a run; use resume or pick a new output_dir");
  std::error_code ec;
  fs::create_directories(dir / run_files::kCheckpoints, ec);
  if (ec) throw std::runtime_error("cannot create run directory " + dir.string() + ": " + ec.message());
  write_file_atomic(dir / run_files::kConfig, dump_config(config));
  for (const char* log : {run_files::kEpisodes, run_files::kEvals}) write_file_atomic(dir / log, "");

  RunCheckpoint state;
  state.streams = RngStreams::from_seed(config.seed);
  state.net = init_random<double>(config.network_shape(), config.network.init, state.streams.init);
  state.config_hash = config_hash(config);
  write_checkpoint(dir, config, 0, state.streams, state.net);
  write_manifest(dir, config, 0, config.episodes == 0 ? "complete" : "running");
  return train_session(dir, config, std::move(state), options);
}

RunStatus resume(const fs::path& run_dir, const RunOptions& options) {
  const ExperimentConfig config = load_run_config(run_dir);
  RunCheckpoint state = load_run_checkpoint(latest_checkpoint(run_dir));
  if (state.config_hash != config_hash(config))
    throw IntegrityError("checkpoint was written for a different config");
  check_compatible(state.net, config.task, config.learner);
  if (state.episode >= config.episodes)
    return {run_dir, state.episode, true, "run already complete; nothing to resume"};

  const auto kept = static_cast<std::size_t>(state.episode);
  truncate_lines(run_dir / run_files::kEpisodes, [&](const std::string&, std::size_t i) { return i < kept; });
  truncate_lines(run_dir / run_files::kEvals, [&](const std::string& line, std::size_t) {
    return json::parse(line).at("episode").get<long>() <= state.episode;
  });
  return train_session(run_dir, config, std::move(state), options);
}

}  // namespace e2erl
