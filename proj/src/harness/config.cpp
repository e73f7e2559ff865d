#include "msfa/harness/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace msfa::harness {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads keys from one JSON object and rejects any key nobody asked for.
class Block {
 public:
  Block(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError("unknown key " + where_ + "." + item.key());
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::vector<Array> read_tasks(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be a list of task vectors");
  std::vector<Array> out;
  for (const auto& t : j) {
    try {
      out.push_back(Array::vector(t.get<std::vector<Real>>()));
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return out;
}

ordered_json task_list(const std::vector<Array>& tasks) {
  ordered_json out = ordered_json::array();
  for (const auto& t : tasks) out.push_back(std::vector<Real>(t.data().begin(), t.data().end()));
  return out;
}

}  // namespace

std::vector<Array> basis_tasks(std::size_t d) {
  std::vector<Array> out;
  for (std::size_t i = 0; i < d; ++i) {
    Array e({d});
    e.data()[i] = 1;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Array> default_test_tasks(std::size_t d) {
  if (d == 4) {
    return {Array::vector({1, 1, 0, 0}),      Array::vector({1, 1, 0.5, 0.5}),  Array::vector({1, 1, 1, 1}),
            Array::vector({-0.5, 1, -0.5, -0.5}), Array::vector({-1, 1, 0, 1}), Array::vector({-1, 1, -1, 1}),
            Array::vector({-1, 1, -1, -1})};
  }
  if (d == 2) return {Array::vector({1, 1}), Array::vector({-1, 1}), Array::vector({1, -1})};
  Array ones({d});
  for (Real& v : ones.data()) v = 1;
  return {ones};
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (workers == 0) throw ConfigError("workers must be positive");
  if (protocol != "babyai" && protocol != "custom") throw ConfigError("tasks.protocol must be babyai or custom");
  if (protocol == "babyai") {
    const auto basis = basis_tasks(task_dim());
    if (train_tasks.size() != basis.size()) throw ConfigError("babyai protocol trains on the basis tasks");
    for (std::size_t i = 0; i < basis.size(); ++i)
      if (max_abs_diff(train_tasks[i], basis[i]) != 0) throw ConfigError("babyai protocol trains on the basis tasks");
  }
  if (eval_episodes == 0) throw ConfigError("eval.episodes must be positive");
  if (log_every == 0 || eval_every == 0) throw ConfigError("log and eval cadences must be positive");
  train_config(seeds.front()).validate();
}

learn::TrainConfig ExperimentConfig::train_config(std::uint64_t seed) const {
  learn::TrainConfig c;
  c.arch = arch;
  c.arch.kind = agent;
  c.arch.obs_dim = env.observation_size();
  c.arch.task_dim = task_dim();
  c.env = env;
  c.learn = learn;
  c.adam = adam;
  c.train_tasks = train_tasks;
  c.eval_tasks = test_tasks;
  c.seed = seed;
  c.total_steps = steps;
  c.trace_length = trace_length;
  c.batch_size = batch_size;
  c.replay_capacity = replay_capacity;
  c.min_replay = min_replay;
  c.updates_per_segment = updates_per_segment;
  c.target_period = target_period;
  c.epsilon_start = epsilon_start;
  c.epsilon_end = epsilon_end;
  c.epsilon_fraction = epsilon_fraction;
  c.log_every = log_every;
  c.eval_every = eval_every;
  c.eval_episodes = eval_episodes;
  c.wall_clock = wall_clock;
  return c;
}

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.env.width = 6;
  c.env.height = 6;
  c.env.num_categories = 2;
  c.env.instances = 3;
  c.env.horizon = 40;
  c.env.view_size = 5;
  c.arch.num_modules = 2;
  c.arch.module_size = 32;
  c.arch.projection_dim = 16;
  c.arch.heads = 2;
  c.arch.lstm_size = 64;
  c.arch.encoder = {64};
  c.arch.phi_hidden = {32};
  c.arch.psi_hidden = {64};
  c.arch.q_hidden = {64};
  c.learn.discount = 0.9;
  c.replay_capacity = 1000;
  c.min_replay = 50;
  c.updates_per_segment = 2;
  c.steps = 40000;
  c.eval_every = 10000;
  c.eval_episodes = 20;
  c.log_every = 1000;
  c.train_tasks = basis_tasks(2);
  c.test_tasks = default_test_tasks(2);
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Block top(root, "config");
  ExperimentConfig c;

  std::string agent = arch::kind_name(c.agent);
  top.get("agent", agent);
  c.agent = arch::parse_kind(agent);
  top.get("seeds", c.seeds);
  top.get("steps", c.steps);
  std::string out = c.output_dir.string();
  top.get("output_dir", out);
  c.output_dir = out;
  top.get("workers", c.workers);
  top.get("checkpoint_every", c.checkpoint_every);

  if (top.has("env")) {
    Block b(top.child("env"), "env");
    b.get("width", c.env.width);
    b.get("height", c.env.height);
    b.get("num_categories", c.env.num_categories);
    b.get("instances", c.env.instances);
    b.get("horizon", c.env.horizon);
    b.get("view_size", c.env.view_size);
    b.finish();
  }

  c.arch = arch::babyai_preset(c.agent, c.env.observation_size(), c.task_dim());
  if (top.has("arch")) {
    Block b(top.child("arch"), "arch");
    b.get("num_modules", c.arch.num_modules);
    b.get("module_size", c.arch.module_size);
    b.get("projection_dim", c.arch.projection_dim);
    b.get("heads", c.arch.heads);
    b.get("zero_key", c.arch.zero_key);
    b.get("lstm_size", c.arch.lstm_size);
    b.get("encoder", c.arch.encoder);
    b.get("phi_hidden", c.arch.phi_hidden);
    b.get("psi_hidden", c.arch.psi_hidden);
    b.get("q_hidden", c.arch.q_hidden);
    b.finish();
  }

  if (top.has("learn")) {
    Block b(top.child("learn"), "learn");
    b.get("discount", c.learn.discount);
    b.get("nstep", c.learn.nstep);
    b.get("q_weight", c.learn.q_weight);
    b.get("psi_weight", c.learn.psi_weight);
    b.get("phi_weight", c.learn.phi_weight);
    b.get("trace_length", c.trace_length);
    b.get("batch_size", c.batch_size);
    b.get("replay_capacity", c.replay_capacity);
    b.get("min_replay", c.min_replay);
    b.get("updates_per_segment", c.updates_per_segment);
    b.get("target_period", c.target_period);
    b.get("learning_rate", c.adam.lr);
    b.get("adam_beta1", c.adam.beta1);
    b.get("adam_beta2", c.adam.beta2);
    b.get("adam_eps", c.adam.eps);
    b.get("max_grad_norm", c.adam.max_grad_norm);
    b.get("epsilon_start", c.epsilon_start);
    b.get("epsilon_end", c.epsilon_end);
    b.get("epsilon_fraction", c.epsilon_fraction);
    b.finish();
  }

  bool custom_test = false;
  if (top.has("tasks")) {
    Block b(top.child("tasks"), "tasks");
    b.get("protocol", c.protocol);
    if (b.has("train")) c.train_tasks = read_tasks(b.child("train"), "tasks.train");
    if (b.has("test")) {
      c.test_tasks = read_tasks(b.child("test"), "tasks.test");
      custom_test = true;
    }
    b.finish();
  }
  if (c.protocol == "babyai" && c.train_tasks.empty()) c.train_tasks = basis_tasks(c.task_dim());
  if (!custom_test) c.test_tasks = default_test_tasks(c.task_dim());

  if (top.has("eval")) {
    Block b(top.child("eval"), "eval");
    b.get("every", c.eval_every);
    b.get("episodes", c.eval_episodes);
    b.finish();
  }
  if (top.has("log")) {
    Block b(top.child("log"), "log");
    b.get("every", c.log_every);
    b.get("wall_clock", c.wall_clock);
    b.finish();
  }
  top.finish();
  c.arch.kind = c.agent;
  c.arch.obs_dim = c.env.observation_size();
  c.arch.task_dim = c.task_dim();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["agent"] = arch::kind_name(c.agent);
  j["seeds"] = c.seeds;
  j["steps"] = c.steps;
  j["output_dir"] = c.output_dir.string();
  j["workers"] = c.workers;
  j["checkpoint_every"] = c.checkpoint_every;
  j["env"] = {{"width", c.env.width},         {"height", c.env.height},   {"num_categories", c.env.num_categories},
              {"instances", c.env.instances}, {"horizon", c.env.horizon}, {"view_size", c.env.view_size}};
  j["arch"] = {{"num_modules", c.arch.num_modules}, {"module_size", c.arch.module_size},
               {"projection_dim", c.arch.projection_dim}, {"heads", c.arch.heads},
               {"zero_key", c.arch.zero_key},     {"lstm_size", c.arch.lstm_size},
               {"encoder", c.arch.encoder},       {"phi_hidden", c.arch.phi_hidden},
               {"psi_hidden", c.arch.psi_hidden}, {"q_hidden", c.arch.q_hidden}};
  j["learn"] = {{"discount", c.learn.discount},
                {"nstep", c.learn.nstep},
                {"q_weight", c.learn.q_weight},
                {"psi_weight", c.learn.psi_weight},
                {"phi_weight", c.learn.phi_weight},
                {"trace_length", c.trace_length},
                {"batch_size", c.batch_size},
                {"replay_capacity", c.replay_capacity},
                {"min_replay", c.min_replay},
                {"updates_per_segment", c.updates_per_segment},
                {"target_period", c.target_period},
                {"learning_rate", c.adam.lr},
                {"adam_beta1", c.adam.beta1},
                {"adam_beta2", c.adam.beta2},
                {"adam_eps", c.adam.eps},
                {"max_grad_norm", c.adam.max_grad_norm},
                {"epsilon_start", c.epsilon_start},
                {"epsilon_end", c.epsilon_end},
                {"epsilon_fraction", c.epsilon_fraction}};
  j["tasks"] = {{"protocol", c.protocol}, {"train", task_list(c.train_tasks)}, {"test", task_list(c.test_tasks)}};
  j["eval"] = {{"every", c.eval_every}, {"episodes", c.eval_episodes}};
  j["log"] = {{"every", c.log_every}, {"wall_clock", c.wall_clock}};
  return j.dump(2) + "\n";
}

std::filesystem::path resolve_output(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("MSFA_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / path;
  }
  return path;
}

}  // namespace msfa::harness
