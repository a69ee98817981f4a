#include "e2erl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "e2erl/checkpoint.hpp"

namespace e2erl {

namespace fs = std::filesystem;
using Eigen::MatrixXd;

ProbeFilter ProbeFilter::all() {
  return {"all", [](const Diagnostics&) { return true; }, false};
}

ProbeFilter ProbeFilter::invisible_only() {
  return {"invisible", [](const Diagnostics& d) { return !d.visible; }, true};
}

ProbeFilter ProbeFilter::nothing() {
  return {"none", [](const Diagnostics&) { return false; }, false};
}

ProbeFilter ProbeFilter::by_name(const std::string& name) {
  if (name == "all") return all();
  if (name == "invisible") return invisible_only();
  if (name == "none") return nothing();
  throw ConfigError("unknown probe filter '" + name + "'");
}

ProbeDataset collect_probe_data(const NetworkWeights<double>& net, const TaskConfig& task,
                                const LearnerConfig& learner, long episodes, const ProbeFilter& filter,
                                std::uint64_t seed, std::vector<TrajectoryRecord>* trajectories) {
  if (!net.is_recurrent()) {
    throw ConfigError(filter.needs_memory
                          ? "filter '" + filter.name + "' needs memory; a feedforward checkpoint has no hidden state"
                          : "probes need a recurrent checkpoint");
  }
  check_compatible(net, task, learner);
  const auto env = make_task(task);
  NetworkWeights<double> frozen = net;
  Rng env_rng = make_stream(seed, "probe-environment");
  Rng explore_rng = make_stream(seed, "probe-exploration");

  std::vector<VectorXd> hidden;
  std::vector<VectorXd> labels;
  ProbeDataset data;
  data.filter = filter.name;
  for (long e = 0; e < episodes; ++e) {
    EpisodeOptions options;
    options.episode_index = e;
    options.trajectory = trajectories;
    options.observer = [&](const VectorXd& h, const Diagnostics& info) {
      if (!filter.accept(info)) return;
      hidden.push_back(h);
      labels.push_back(info.labels);
      data.episodes.push_back(e);
    };
    run_episode(*env, frozen, learner, env_rng, explore_rng, options);
  }
  const Index n = static_cast<Index>(hidden.size());
  data.hidden.resize(n, net.hidden_size());
  data.labels.resize(n, n ? labels.front().size() : 0);
  for (Index i = 0; i < n; ++i) {
    data.hidden.row(i) = hidden[i].transpose();
    data.labels.row(i) = labels[i].transpose();
  }
  return data;
}

Eigen::VectorXd r_squared(const MatrixXd& truth, const MatrixXd& predicted) {
  Eigen::VectorXd r2(truth.cols());
  for (Index c = 0; c < truth.cols(); ++c) {
    const double mean = truth.col(c).mean();
    const double sst = (truth.col(c).array() - mean).square().sum();
    const double sse = (truth.col(c) - predicted.col(c)).squaredNorm();
    r2[c] = sst > 0 ? 1.0 - sse / sst : (sse == 0 ? 1.0 : 0.0);
  }
  return r2;
}

namespace {

MatrixXd with_intercept(const MatrixXd& x) {
  MatrixXd out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setOnes();
  return out;
}

MatrixXd gather(const MatrixXd& m, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

ProbeResult linear_probe(const ProbeDataset& data, double ridge, double holdout_fraction) {
  if (data.rows() == 0) throw NoDataError("probe dataset is empty");
  if (!(ridge >= 0)) throw ConfigError("ridge must be non-negative");
  if (!(holdout_fraction > 0 && holdout_fraction < 1)) throw ConfigError("holdout fraction must lie in (0, 1)");

  std::vector<long> distinct;
  for (long e : data.episodes)
    if (distinct.empty() || distinct.back() != e) distinct.push_back(e);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) throw NoDataError("probe needs rows from at least two episodes");
  const auto held = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(distinct.size()))), 1,
      distinct.size() - 1);
  const long first_test = distinct[distinct.size() - held];

  std::vector<Index> train, test;
  for (Index i = 0; i < data.rows(); ++i)
    (data.episodes[static_cast<std::size_t>(i)] >= first_test ? test : train).push_back(i);

  const MatrixXd x_train = with_intercept(gather(data.hidden, train));
  const MatrixXd y_train = gather(data.labels, train);
  MatrixXd gram = x_train.transpose() * x_train;
  gram.diagonal().head(data.hidden.cols()).array() += ridge;
  const Eigen::LDLT<MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
    throw NumericalError(ridge == 0 ? "probe normal equations are singular; use ridge > 0"
                                    : "probe normal equations are singular");
  }

  ProbeResult result;
  result.coefficients = ldlt.solve(x_train.transpose() * y_train);
  result.train_rows = static_cast<Index>(train.size());
  result.test_rows = static_cast<Index>(test.size());
  result.r2_in_sample = r_squared(y_train, x_train * result.coefficients);
  const MatrixXd x_test = with_intercept(gather(data.hidden, test));
  result.r2_held_out = r_squared(gather(data.labels, test), x_test * result.coefficients);
  return result;
}

ProbeResult permutation_null_probe(const ProbeDataset& data, double ridge, std::uint64_t seed,
                                   double holdout_fraction) {
  ProbeDataset shuffled = data;
  Rng rng = make_stream(seed, "probe-permutation");
  for (Index i = data.rows() - 1; i > 0; --i) {
    const auto j = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(i + 1)));
    shuffled.labels.row(i).swap(shuffled.labels.row(j));
  }
  return linear_probe(shuffled, ridge, holdout_fraction);
}

// ---------------------------------------------------------------------------
// behaviour

BehaviorStats behavior_stats(const std::vector<TrajectoryRecord>& records, double approach_line) {
  if (records.empty()) throw NoDataError("no trajectory records");
  BehaviorStats stats;
  double wait_sum = 0, wait_success_sum = 0, capture_step_sum = 0;
  long wait_n = 0, wait_success_n = 0, backward = 0;

  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin;
    while (end < records.size() && records[end].episode == records[begin].episode) ++end;
    const TrajectoryRecord& last = records[end - 1];
    const bool success = is_success(last.outcome);
    ++stats.episodes;

    for (std::size_t i = begin; i < end && records[i].object_x < approach_line; ++i) {
      wait_sum += records[i].agent_y;
      ++wait_n;
      if (success) {
        wait_success_sum += records[i].agent_y;
        ++wait_success_n;
      }
    }

    if (success) {
      ++stats.successes;
      capture_step_sum += static_cast<double>(last.step);
      const std::size_t from = end - 1 >= begin + kBackwardWindow ? end - 1 - kBackwardWindow : begin;
      int eligible = 0, agree = 0;
      for (std::size_t i = from + 1; i < end; ++i) {
        const double object_dy = records[i].object_y - records[i - 1].object_y;
        const double agent_dy = records[i].agent_y - records[i - 1].agent_y;
        if (std::abs(object_dy) <= 1e-12) continue;
        ++eligible;
        if (agent_dy != 0 && std::signbit(agent_dy) == std::signbit(object_dy)) ++agree;
      }
      if (eligible > 0) {
        ++stats.backward_eligible;
        if (2 * agree > eligible) ++backward;
      }
    }
    begin = end;
  }

  stats.success_rate = static_cast<double>(stats.successes) / static_cast<double>(stats.episodes);
  stats.mean_waiting_y = wait_n ? wait_sum / static_cast<double>(wait_n) : 0.0;
  stats.mean_waiting_y_success = wait_success_n ? wait_success_sum / static_cast<double>(wait_success_n) : 0.0;
  stats.mean_capture_step = stats.successes ? capture_step_sum / static_cast<double>(stats.successes) : 0.0;
  stats.backward_fraction =
      stats.backward_eligible ? static_cast<double>(backward) / static_cast<double>(stats.backward_eligible) : 0.0;
  return stats;
}

BehaviorStats behavior_stats(const std::vector<fs::path>& trajectory_files, double approach_line) {
  std::vector<TrajectoryRecord> all;
  long offset = 0;
  for (const auto& path : trajectory_files) {
    auto records = read_trajectories(path);
    long max_episode = -1;
    for (auto& r : records) {
      max_episode = std::max(max_episode, r.episode);
      r.episode += offset;
    }
    offset += max_episode + 1;
    all.insert(all.end(), records.begin(), records.end());
  }
  return behavior_stats(all, approach_line);
}

// ---------------------------------------------------------------------------
// run-level reports

nlohmann::json ProbeReport::to_json() const {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"filter", filter},
          {"rows", rows},
          {"r2_in_sample", vec(r2_in_sample)},
          {"r2_held_out", vec(r2_held_out)},
          {"r2_null_held_out", vec(r2_null_held_out)}};
}

ProbeReport probe_run(const fs::path& run_dir, long episodes, std::uint64_t seed, double ridge) {
  const ExperimentConfig config = load_run_config(run_dir);
  const RunCheckpoint checkpoint = load_run_checkpoint(latest_checkpoint(run_dir));
  const std::string task = config.task.name();
  const ProbeFilter filter =
      task == "capture" || task == "memory_cue" ? ProbeFilter::invisible_only() : ProbeFilter::all();
  const ProbeDataset data =
      collect_probe_data(checkpoint.net, config.task, config.learner, episodes, filter, seed);
  const ProbeResult fit = linear_probe(data, ridge);
  const ProbeResult null = permutation_null_probe(data, ridge, seed);
  ProbeReport report{filter.name, data.rows(), fit.r2_in_sample, fit.r2_held_out, null.r2_held_out};
  write_file_atomic(run_dir / "probe.json", report.to_json().dump(2) + "\n");
  return report;
}

namespace {

void write_csv(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
  std::ostringstream out;
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
  write_file_atomic(path, out.str());
}

}  // namespace

std::vector<fs::path> export_plot_data(const fs::path& run_dir) {
  const std::vector<EpisodeLog> logs = read_episode_logs(run_dir);
  const fs::path out_dir = run_dir / "export";
  fs::create_directories(out_dir);

  std::vector<std::string> curve;
  curve.reserve(logs.size());
  for (const auto& log : logs) {
    curve.push_back(std::to_string(log.episode) + "," + format_double(log.episode_return) + "," +
                    (is_success(log.outcome) ? "1" : "0") + "," + std::to_string(log.steps) + "," +
                    format_double(log.mean_abs_td));
  }
  write_csv(out_dir / "learning_curve.csv", "episode,return,success,steps,mean_abs_td", curve);

  std::vector<std::string> probe;
  if (fs::exists(run_dir / "probe.json")) {
    const auto doc = nlohmann::json::parse(read_file(run_dir / "probe.json"));
    const auto in = doc.at("r2_in_sample").get<std::vector<double>>();
    const auto held = doc.at("r2_held_out").get<std::vector<double>>();
    const auto null = doc.at("r2_null_held_out").get<std::vector<double>>();
    for (std::size_t i = 0; i < in.size(); ++i) {
      probe.push_back(std::to_string(i) + "," + doc.at("filter").get<std::string>() + "," +
                      std::to_string(doc.at("rows").get<long>()) + "," + format_double(in[i]) + "," +
                      format_double(held[i]) + "," + format_double(null[i]));
    }
  }
  write_csv(out_dir / "probe.csv", "label,filter,rows,r2_in_sample,r2_held_out,r2_null_held_out", probe);

  std::vector<std::string> steps;
  const fs::path traj = run_dir / "eval" / "trajectories.jsonl";
  if (fs::exists(traj)) {
    for (const auto& r : read_trajectories(traj)) {
      steps.push_back(std::to_string(r.episode) + "," + std::to_string(r.step) + "," + format_double(r.agent_y) +
                      "," + format_double(r.object_x) + "," + format_double(r.object_y) + "," +
                      (r.visible ? "1" : "0") + "," + r.action);
    }
  }
  write_csv(out_dir / "trajectories.csv", "episode,step,agent_y,object_x,object_y,visible,action", steps);

  return {out_dir / "learning_curve.csv", out_dir / "probe.csv", out_dir / "trajectories.csv"};
}

std::vector<LearningCurveRow> read_learning_curve_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NoDataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "episode,return,success,steps,mean_abs_td") throw IntegrityError("unexpected learning-curve header");
  std::vector<LearningCurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell[5];
    for (auto& c : cell) std::getline(fields, c, ',');
    rows.push_back({std::stol(cell[0]), std::strtod(cell[1].c_str(), nullptr), std::stoi(cell[2]),
                    std::stol(cell[3]), std::strtod(cell[4].c_str(), nullptr)});
  }
  return rows;
}

}  // namespace e2erl
