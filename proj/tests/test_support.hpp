#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "e2erl/config.hpp"
#include "e2erl/envsim.hpp"
#include "e2erl/neuralnet.hpp"
#include "e2erl/rng.hpp"

namespace e2erl::testing {

inline NetworkWeights<double> random_network(std::vector<Index> sizes, bool recurrent, std::uint64_t seed,
                                             double range = 0.8) {
  NetworkShape shape;
  shape.layer_sizes = std::move(sizes);
  shape.recurrent = recurrent;
  InitOptions options;
  options.range = range;
  options.output_range = range;
  options.recurrent = RecurrentInit::Random;
  Rng rng = make_stream(seed, "test-net");
  return init_random<double>(shape, options, rng);
}

inline Eigen::VectorXd random_vector(Index n, Rng& rng, double lo = -1, double hi = 1) {
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = uniform(rng, lo, hi);
  return v;
}

/// Central finite differences of `loss` over every parameter of `net`.
inline Eigen::VectorXd numeric_gradient(const NetworkWeights<double>& net,
                                        const std::function<double(const NetworkWeights<double>&)>& loss,
                                        double eps = 1e-5) {
  const Eigen::VectorXd theta = flatten_parameters(net);
  Eigen::VectorXd grad(theta.size());
  NetworkWeights<double> probe = net;
  for (Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd t = theta;
    t[i] = theta[i] + eps;
    assign_parameters(probe, t);
    const double up = loss(probe);
    t[i] = theta[i] - eps;
    assign_parameters(probe, t);
    const double down = loss(probe);
    grad[i] = (up - down) / (2 * eps);
  }
  return grad;
}

inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-7) {
  double worst = 0;
  for (Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("e2erl-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Experiment config from an inline JSON patch over the defaults.
inline ExperimentConfig config_from(const nlohmann::json& doc) { return experiment_from_json(doc); }

/// Scripted baseline for the capture task: each step it tries to capture with
/// probability `capture_prob`, otherwise moves with uniform motor commands.
inline double random_capture_baseline(const CaptureConfig& config, long episodes, std::uint64_t seed,
                                      double capture_prob = 0.5) {
  CaptureTask task(config);
  Rng env = make_stream(seed, "baseline-environment"), act = make_stream(seed, "baseline-actions");
  long successes = 0;
  for (long e = 0; e < episodes; ++e) {
    EnvOutcome out = task.reset(env);
    while (!out.terminal) {
      if (uniform01(act) < capture_prob) {
        out = task.step(Discrete{CaptureTask::kCapture}, env);
      } else {
        Eigen::VectorXd m(2);
        m << uniform(act, -config.motor_limit, config.motor_limit), uniform(act, -config.motor_limit, config.motor_limit);
        out = task.step(Continuous{m}, env);
      }
    }
    successes += out.outcome == Outcome::Capture;
  }
  return static_cast<double>(successes) / static_cast<double>(episodes);
}

}  // namespace e2erl::testing
