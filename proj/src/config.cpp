#include "e2erl/config.hpp"

#include <cstdio>
#include <set>

#include "e2erl/checkpoint.hpp"

namespace e2erl {

using nlohmann::json;

namespace {

/// Reads fields from one JSON object and remembers which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& doc, std::string context) : doc_(doc), context_(std::move(context)) {
    if (!doc_.is_object()) throw ConfigError(context_ + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return doc_.contains(key) ? &doc_.at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return context_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : doc_.items())
      if (!seen_.count(key)) throw ConfigError(context_ + ": unknown key '" + key + "'");
  }

 private:
  const json& doc_;
  std::string context_;
  std::set<std::string> seen_;
};

json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

void read_interval(ObjectReader& r, const std::string& key, Interval& out) {
  if (const json* j = r.child(key)) {
    if (!j->is_array() || j->size() != 2 || !(*j)[0].is_number() || !(*j)[1].is_number())
      throw ConfigError(r.path(key) + ": expected [lo, hi]");
    out = {(*j)[0].get<double>(), (*j)[1].get<double>()};
  }
}

json grid_json(const ReceptiveGrid& g) {
  return {{"nx", g.nx}, {"ny", g.ny}, {"x_range", {g.x_lo, g.x_hi}}, {"y_range", {g.y_lo, g.y_hi}}};
}

ReceptiveGrid grid_from_json(const json& doc, const std::string& context, ReceptiveGrid g) {
  ObjectReader r(doc, context);
  r.get("nx", g.nx);
  r.get("ny", g.ny);
  Interval xr{g.x_lo, g.x_hi}, yr{g.y_lo, g.y_hi};
  read_interval(r, "x_range", xr);
  read_interval(r, "y_range", yr);
  r.finish();
  g.x_lo = xr.lo;
  g.x_hi = xr.hi;
  g.y_lo = yr.lo;
  g.y_hi = yr.hi;
  return g;
}

SensorConfig sensors_from_json(const json& doc, const std::string& context) {
  if (doc.is_string()) {
    const auto name = doc.get<std::string>();
    if (name == "desk") return SensorConfig::desk();
    if (name == "full") return SensorConfig::full_scale();
    throw ConfigError(context + ": unknown sensor preset '" + name + "' (desk, full)");
  }
  SensorConfig s = SensorConfig::desk();
  ObjectReader r(doc, context);
  if (const json* j = r.child("object")) s.object = grid_from_json(*j, context + ".object", s.object);
  if (const json* j = r.child("agent")) s.agent = grid_from_json(*j, context + ".agent", s.agent);
  r.finish();
  return s;
}

json activation_json(const ActivationSpec& a) {
  return {{"kind", to_string(a.kind)}, {"output_scale", a.output_scale}};
}

ActivationSpec activation_from_json(const json& doc, const std::string& context, ActivationSpec a) {
  ObjectReader r(doc, context);
  std::string kind = to_string(a.kind);
  r.get("kind", kind);
  r.get("output_scale", a.output_scale);
  r.finish();
  a.kind = activation_kind_from_string(kind);
  if (!(a.output_scale > 0)) throw ConfigError(context + ".output_scale must be positive");
  return a;
}

json schedule_json(const Schedule& s) {
  return {{"start", s.start}, {"end", s.end}, {"decay_episodes", s.decay_episodes}};
}

Schedule schedule_from_json(const json& doc, const std::string& context, Schedule s) {
  ObjectReader r(doc, context);
  r.get("start", s.start);
  r.get("end", s.end);
  r.get("decay_episodes", s.decay_episodes);
  r.finish();
  return s;
}

json learner_json(const LearnerConfig& l) {
  return {{"kind", to_string(l.kind)},
          {"discount", l.discount},
          {"lr_net", l.lr_net},
          {"epsilon", schedule_json(l.epsilon)},
          {"noise_sigma", schedule_json(l.noise_sigma)},
          {"q_scale", l.q_scale},
          {"actor_gain", l.actor_gain},
          {"discrete_actions", l.discrete_actions},
          {"motor_size", l.motor_size},
          {"move_index", l.move_index},
          {"motor_limit", l.motor_limit},
          {"bptt_window", l.bptt_window}};
}

LearnerConfig learner_from_json(const json& doc, const TaskConfig& task) {
  LearnerConfig l;
  // Action-space defaults follow the task.
  const auto env = make_task(task);
  l.discrete_actions = std::max(env->discrete_actions(), 1);
  l.motor_size = std::max(env->motor_size(), 1);
  if (env->discrete_actions() == 0) l.kind = LearnerKind::ActorCritic;
  else if (env->motor_size() == 0) l.kind = LearnerKind::QLearning;

  ObjectReader r(doc, "learner");
  std::string kind = to_string(l.kind);
  r.get("kind", kind);
  l.kind = learner_kind_from_string(kind);
  r.get("discount", l.discount);
  r.get("lr_net", l.lr_net);
  if (const json* j = r.child("epsilon")) l.epsilon = schedule_from_json(*j, "learner.epsilon", l.epsilon);
  if (const json* j = r.child("noise_sigma"))
    l.noise_sigma = schedule_from_json(*j, "learner.noise_sigma", l.noise_sigma);
  r.get("q_scale", l.q_scale);
  r.get("actor_gain", l.actor_gain);
  r.get("discrete_actions", l.discrete_actions);
  r.get("motor_size", l.motor_size);
  r.get("move_index", l.move_index);
  r.get("motor_limit", l.motor_limit);
  r.get("bptt_window", l.bptt_window);
  r.finish();
  return l;
}

json network_json(const NetworkConfig& n) {
  return {{"hidden", n.hidden},
          {"recurrent", n.recurrent},
          {"hidden_activation", activation_json(n.hidden_activation)},
          {"output_activation", activation_json(n.output_activation)},
          {"bias", n.bias},
          {"init",
           {{"range", n.init.range},
            {"output_range", n.init.output_range},
            {"recurrent", to_string(n.init.recurrent)},
            {"identity_gain", n.init.identity_gain}}}};
}

NetworkConfig network_from_json(const json& doc) {
  NetworkConfig n;
  ObjectReader r(doc, "network");
  r.get("hidden", n.hidden);
  r.get("recurrent", n.recurrent);
  if (const json* j = r.child("hidden_activation"))
    n.hidden_activation = activation_from_json(*j, "network.hidden_activation", n.hidden_activation);
  if (const json* j = r.child("output_activation"))
    n.output_activation = activation_from_json(*j, "network.output_activation", n.output_activation);
  r.get("bias", n.bias);
  if (const json* j = r.child("init")) {
    ObjectReader ir(*j, "network.init");
    ir.get("range", n.init.range);
    ir.get("output_range", n.init.output_range);
    std::string kind = to_string(n.init.recurrent);
    ir.get("recurrent", kind);
    n.init.recurrent = recurrent_init_from_string(kind);
    ir.get("identity_gain", n.init.identity_gain);
    ir.finish();
  }
  r.finish();
  return n;
}

}  // namespace

json task_to_json(const TaskConfig& task) {
  json params = std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, CaptureConfig>) {
          return {{"field_x", p.field_x},
                  {"field_y", p.field_y},
                  {"agent_x", p.agent_x},
                  {"agent_range", interval_json(p.agent_range)},
                  {"start_y", interval_json(p.start_y)},
                  {"cone_half_angle", p.cone_half_angle},
                  {"speed", interval_json(p.speed)},
                  {"invisible_x0", interval_json(p.invisible_x0)},
                  {"invisible_width", interval_json(p.invisible_width)},
                  {"invisible_y0", interval_json(p.invisible_y0)},
                  {"invisible_height", interval_json(p.invisible_height)},
                  {"direction_change_prob", p.direction_change_prob},
                  {"capture_radius", p.capture_radius},
                  {"t_max", p.t_max},
                  {"motion_scale", p.motion_scale},
                  {"motor_limit", p.motor_limit},
                  {"r_capture", p.r_capture},
                  {"r_fail", p.r_fail},
                  {"sensors", {{"object", grid_json(p.sensors.object)}, {"agent", grid_json(p.sensors.agent)}}}};
        } else if constexpr (std::is_same_v<T, MemoryCueConfig>) {
          return {{"delay", p.delay}, {"r_correct", p.r_correct}, {"r_wrong", p.r_wrong}};
        } else if constexpr (std::is_same_v<T, Reach1dConfig>) {
          return {{"start", interval_json(p.start)}, {"target", interval_json(p.target)},
                  {"radius", p.radius},              {"motion_scale", p.motion_scale},
                  {"motor_limit", p.motor_limit},    {"t_max", p.t_max},
                  {"r_goal", p.r_goal},              {"grid_cells", p.grid_cells}};
        } else {
          return {{"states", p.states}, {"r_goal", p.r_goal}, {"t_max", p.t_max}};
        }
      },
      task.params);
  return {{"name", task.name()}, {"params", params}};
}

TaskConfig task_from_json(const json& doc) {
  ObjectReader r(doc, "task");
  std::string name;
  r.get("name", name);
  if (name.empty()) throw ConfigError("task.name is required");
  TaskConfig task = TaskConfig::defaults(name);
  const json empty = json::object();
  const json* params = r.child("params");
  r.finish();
  ObjectReader p(params ? *params : empty, "task.params");
  std::visit(
      [&](auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, CaptureConfig>) {
          p.get("field_x", c.field_x);
          p.get("field_y", c.field_y);
          p.get("agent_x", c.agent_x);
          read_interval(p, "agent_range", c.agent_range);
          read_interval(p, "start_y", c.start_y);
          p.get("cone_half_angle", c.cone_half_angle);
          read_interval(p, "speed", c.speed);
          read_interval(p, "invisible_x0", c.invisible_x0);
          read_interval(p, "invisible_width", c.invisible_width);
          read_interval(p, "invisible_y0", c.invisible_y0);
          read_interval(p, "invisible_height", c.invisible_height);
          p.get("direction_change_prob", c.direction_change_prob);
          p.get("capture_radius", c.capture_radius);
          p.get("t_max", c.t_max);
          p.get("motion_scale", c.motion_scale);
          p.get("motor_limit", c.motor_limit);
          p.get("r_capture", c.r_capture);
          p.get("r_fail", c.r_fail);
          if (const json* s = p.child("sensors")) c.sensors = sensors_from_json(*s, "task.params.sensors");
        } else if constexpr (std::is_same_v<T, MemoryCueConfig>) {
          p.get("delay", c.delay);
          p.get("r_correct", c.r_correct);
          p.get("r_wrong", c.r_wrong);
        } else if constexpr (std::is_same_v<T, Reach1dConfig>) {
          read_interval(p, "start", c.start);
          read_interval(p, "target", c.target);
          p.get("radius", c.radius);
          p.get("motion_scale", c.motion_scale);
          p.get("motor_limit", c.motor_limit);
          p.get("t_max", c.t_max);
          p.get("r_goal", c.r_goal);
          p.get("grid_cells", c.grid_cells);
        } else {
          p.get("states", c.states);
          p.get("r_goal", c.r_goal);
          p.get("t_max", c.t_max);
        }
        p.finish();
        c.validate();
      },
      task.params);
  return task;
}

NetworkShape ExperimentConfig::network_shape() const {
  NetworkShape shape;
  shape.layer_sizes.push_back(make_task(task)->observation_size());
  for (Index h : network.hidden) shape.layer_sizes.push_back(h);
  shape.layer_sizes.push_back(learner.output_size());
  shape.recurrent = network.recurrent;
  shape.hidden_activation = network.hidden_activation;
  shape.output_activation = network.output_activation;
  shape.trainable_bias = network.bias;
  return shape;
}

void ExperimentConfig::validate() const {
  std::visit([](const auto& c) { c.validate(); }, task.params);
  learner.validate();
  const auto env = make_task(task);
  if (learner.kind != LearnerKind::ActorCritic && learner.discrete_actions != env->discrete_actions())
    throw ConfigError("learner.discrete_actions does not match task '" + task.name() + "'");
  if (learner.kind != LearnerKind::QLearning && learner.motor_size != env->motor_size())
    throw ConfigError("learner.motor_size does not match task '" + task.name() + "'");
  if (learner.kind == LearnerKind::ActorCritic && env->discrete_actions() != 0)
    throw ConfigError("actor_critic needs a purely continuous task");
  if (learner.kind == LearnerKind::QLearning && env->motor_size() != 0)
    throw ConfigError("q_learning needs a purely discrete task");
  if (network.recurrent && network.hidden.empty()) throw ConfigError("a recurrent network needs a hidden layer");
  for (Index h : network.hidden)
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  if (!(network.init.range >= 0) || !(network.init.output_range >= 0))
    throw ConfigError("network.init ranges must be non-negative");
  if (!(network.init.identity_gain > 0)) throw ConfigError("network.init.identity_gain must be positive");
  if (episodes < 0) throw ConfigError("episodes must be non-negative");
  if (eval_every < 1 || eval_episodes < 1) throw ConfigError("eval_every and eval_episodes must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir is required");
}

json to_json(const ExperimentConfig& c) {
  return {{"task", task_to_json(c.task)},
          {"network", network_json(c.network)},
          {"learner", learner_json(c.learner)},
          {"episodes", c.episodes},
          {"eval_every", c.eval_every},
          {"eval_episodes", c.eval_episodes},
          {"seed", c.seed},
          {"output_dir", c.output_dir}};
}

ExperimentConfig experiment_from_json(const json& doc) {
  ExperimentConfig c;
  ObjectReader r(doc, "config");
  const json* task = r.child("task");
  if (task == nullptr) throw ConfigError("config.task is required");
  c.task = task_from_json(*task);
  if (const json* n = r.child("network")) c.network = network_from_json(*n);
  const json empty = json::object();
  const json* learner = r.child("learner");
  c.learner = learner_from_json(learner ? *learner : empty, c.task);
  r.get("episodes", c.episodes);
  r.get("eval_every", c.eval_every);
  r.get("eval_episodes", c.eval_episodes);
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.finish();
  c.validate();
  return c;
}

std::string dump_config(const ExperimentConfig& config) { return to_json(config).dump(2) + "\n"; }

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return experiment_from_json(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error&) {
    throw ConfigError("cannot read config " + path.string());
  }
  return parse_config(text);
}

std::string config_hash(const ExperimentConfig& config) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(config).dump())));
  return buf;
}

}  // namespace e2erl
