#pragma once

// Experiment configuration: a nested JSON document. Every object rejects keys
// it does not know, and missing keys take the documented defaults.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "e2erl/envsim.hpp"
#include "e2erl/neuralnet.hpp"
#include "e2erl/rl.hpp"

namespace e2erl {

struct NetworkConfig {
  std::vector<Index> hidden{20};
  bool recurrent = true;
  ActivationSpec hidden_activation;
  ActivationSpec output_activation;
  bool bias = true;
  InitOptions init;

  bool operator==(const NetworkConfig& o) const {
    return hidden == o.hidden && recurrent == o.recurrent && hidden_activation == o.hidden_activation &&
           output_activation == o.output_activation && bias == o.bias && init.range == o.init.range &&
           init.output_range == o.init.output_range && init.recurrent == o.init.recurrent &&
           init.identity_gain == o.init.identity_gain;
  }
};

struct ExperimentConfig {
  TaskConfig task = TaskConfig::defaults("capture");
  NetworkConfig network;
  LearnerConfig learner;
  long episodes = 1000;
  long eval_every = 100;
  long eval_episodes = 100;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";

  /// Network shape implied by the task's sensors and the learner's outputs.
  NetworkShape network_shape() const;
  /// ConfigError when anything is inconsistent.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_from_json(const nlohmann::json& doc);

nlohmann::json task_to_json(const TaskConfig& task);
TaskConfig task_from_json(const nlohmann::json& doc);

/// Canonical text form (sorted keys, 2-space indent, trailing newline).
std::string dump_config(const ExperimentConfig& config);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string config_hash(const ExperimentConfig& config);

}  // namespace e2erl
