#include "msfa/learn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "msfa/learn/evaluate.hpp"
#include "msfa/numcore/checkpoint.hpp"
#include "msfa/policy/policy.hpp"

namespace msfa::learn {

namespace fs = std::filesystem;
using arch::Agent;
using arch::RecurrentState;

namespace {

constexpr std::uint64_t kActorStream = 1;
constexpr std::uint64_t kSamplerStream = 2;
constexpr std::uint64_t kInitStream = 3;
constexpr std::uint64_t kEvalStream = 4;
constexpr int kStateFormat = 1;

std::vector<Real> to_vector(const Array& a) { return {a.data().begin(), a.data().end()}; }

std::vector<Array> state_arrays(const RecurrentState& s) {
  std::vector<Array> out;
  for (const auto& p : s.parts) out.push_back(p.value());
  return out;
}

Array one_hot(int action, std::size_t A) {
  Array a(Shape{1, A});
  if (action >= 0) a[static_cast<std::size_t>(action)] = 1;
  return a;
}

// Segment under construction.
struct OpenSegment {
  std::vector<Array> obs;
  std::vector<Array> cumulants;
  std::vector<int> actions;
  std::vector<Real> rewards;
  int first_prev_action = -1;
  std::vector<Array> initial_state;

  Segment close(std::size_t T, const Array& task, bool terminal) const {
    const std::size_t n = actions.size(), O = obs[0].size(), d = task.size();
    Segment s;
    s.obs = Array(Shape{T + 1, O});
    for (std::size_t t = 0; t < obs.size(); ++t) std::copy_n(obs[t].raw(), O, s.obs.raw() + t * O);
    s.cumulants = Array(Shape{T, d});
    for (std::size_t t = 0; t < n; ++t) std::copy_n(cumulants[t].raw(), d, s.cumulants.raw() + t * d);
    s.task = task;
    s.actions = actions;
    s.actions.resize(T, 0);
    s.rewards = rewards;
    s.rewards.resize(T, 0);
    s.mask.assign(T, 0);
    std::fill_n(s.mask.begin(), n, Real{1});
    s.terminal.assign(T, 0);
    if (terminal && n > 0) s.terminal[n - 1] = 1;
    s.first_prev_action = first_prev_action;
    s.initial_state = initial_state;
    return s;
  }
};

ParamSet encode_replay(const ReplayBuffer& replay) {
  ParamSet p;
  std::size_t i = 0;
  for (const auto& s : replay.items()) {
    char id[16];
    std::snprintf(id, sizeof id, "%08zu", i++);
    const std::string pre = std::string("replay/") + id + "/";
    p.add(pre + "obs", s.obs);
    p.add(pre + "cumulants", s.cumulants);
    p.add(pre + "task", s.task);
    std::vector<Real> acts(s.actions.begin(), s.actions.end());
    p.add(pre + "actions", Array::vector(acts));
    p.add(pre + "rewards", Array::vector(s.rewards));
    p.add(pre + "mask", Array::vector(s.mask));
    p.add(pre + "terminal", Array::vector(s.terminal));
    p.add(pre + "first_prev_action", Array::scalar(static_cast<Real>(s.first_prev_action)));
    for (std::size_t k = 0; k < s.initial_state.size(); ++k) p.add(pre + "state" + std::to_string(k), s.initial_state[k]);
  }
  return p;
}

void decode_replay(const ParamSet& p, ReplayBuffer& replay) {
  std::map<std::string, Segment> segs;
  for (const auto& [path, value] : p.entries()) {
    if (path.rfind("replay/", 0) != 0) continue;
    const auto slash = path.find('/', 7);
    const std::string id = path.substr(7, slash - 7), field = path.substr(slash + 1);
    Segment& s = segs[id];
    auto ints = [&] {
      std::vector<int> out;
      for (Real v : value.data()) out.push_back(static_cast<int>(v));
      return out;
    };
    if (field == "obs") s.obs = value;
    else if (field == "cumulants") s.cumulants = value;
    else if (field == "task") s.task = value;
    else if (field == "actions") s.actions = ints();
    else if (field == "rewards") s.rewards = to_vector(value);
    else if (field == "mask") s.mask = to_vector(value);
    else if (field == "terminal") s.terminal = to_vector(value);
    else if (field == "first_prev_action") s.first_prev_action = static_cast<int>(value.item());
    else if (field.rfind("state", 0) == 0) {
      const std::size_t k = std::stoul(field.substr(5));
      if (s.initial_state.size() <= k) s.initial_state.resize(k + 1);
      s.initial_state[k] = value;
    } else {
      throw ConfigError("unknown replay field " + path);
    }
  }
  for (auto& [id, s] : segs) replay.push(std::move(s));
}

ParamSet batch_dump(const Batch& b) {
  ParamSet p;
  p.add("obs", b.obs);
  p.add("prev_actions", b.prev_actions);
  p.add("actions", b.actions);
  p.add("rewards", b.rewards);
  p.add("cumulants", b.cumulants);
  p.add("tasks", b.tasks);
  p.add("mask", b.mask);
  p.add("terminal", b.terminal);
  for (std::size_t k = 0; k < b.initial_state.size(); ++k) p.add("state" + std::to_string(k), b.initial_state[k]);
  return p;
}

class Trainer {
 public:
  Trainer(const TrainConfig& config, const TrainOutputs& outputs)
      : cfg_(config),
        out_(outputs),
        agent_(config.arch),
        env_(config.env),
        replay_(config.replay_capacity),
        actor_rng_(mix_seed(config.seed, kActorStream)),
        sampler_rng_(mix_seed(config.seed, kSamplerStream)),
        writer_(outputs.metrics_csv, outputs.metrics_jsonl),
        started_(std::chrono::steady_clock::now()) {
    online_ = agent_.init_params(mix_seed(config.seed, kInitStream));
    target_ = online_;
    next_checkpoint_ = out_.checkpoint_every;
  }

  TrainResult run() {
    const bool resumed = out_.resume && !out_.checkpoint_dir.empty() && fs::exists(state_file());
    if (resumed) {
      load();
    } else if (!out_.metrics_csv.empty()) {
      writer_.start();
    }
    if (resumed && !out_.metrics_csv.empty()) writer_.resume(csv_bytes_, jsonl_bytes_);

    TrainResult result;
    while (env_steps_ < cfg_.total_steps) {
      if (!out_.checkpoint_dir.empty() && out_.checkpoint_every > 0 && env_steps_ >= next_checkpoint_) {
        while (next_checkpoint_ <= env_steps_) next_checkpoint_ += out_.checkpoint_every;
        save();
      }
      if (out_.stop_after_steps > 0 && env_steps_ >= out_.stop_after_steps) {
        if (!out_.checkpoint_dir.empty()) save();
        return finish(std::move(result), false);
      }
      run_episode(result);
    }
    if (!out_.checkpoint_dir.empty()) save();
    return finish(std::move(result), true);
  }

 private:
  fs::path state_file() const { return out_.checkpoint_dir / "trainer_state.json"; }

  TrainResult finish(TrainResult result, bool finished) {
    writer_.flush();
    result.params = online_;
    result.env_steps = env_steps_;
    result.learner_steps = learner_steps_;
    result.episodes = episodes_;
    result.finished = finished;
    return result;
  }

  void emit(TrainResult& result, MetricRow row) {
    row.kind = arch::kind_name(agent_.kind());
    row.seed = cfg_.seed;
    row.step = env_steps_;
    if (cfg_.wall_clock) {
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started_).count();
    }
    writer_.write(row);
    result.rows.push_back(std::move(row));
  }

  void run_episode(TrainResult& result) {
    const std::size_t A = cfg_.arch.num_actions, O = cfg_.env.observation_size(), T = cfg_.trace_length;
    const Array& task = cfg_.train_tasks[actor_rng_.index(cfg_.train_tasks.size())];
    const Array first = env_.reset(task, actor_rng_.next());
    Bindings actor(online_, false);

    OpenSegment seg;
    RecurrentState state = agent_.initial_state(1);
    seg.initial_state = state_arrays(state);
    seg.obs.push_back(first);
    state = agent_.observe(actor, Var::constant(first.reshaped({1, O})), Var::constant(one_hot(-1, A)), state);
    Real ret = 0;

    while (true) {
      const Real eps = epsilon_at(cfg_, env_steps_);
      const int a = static_cast<int>(policy::act_train(agent_, actor, state, task, eps, actor_rng_));
      const auto step = env_.step(a);
      ++env_steps_;
      ret += step.reward;
      seg.actions.push_back(a);
      seg.rewards.push_back(step.reward);
      seg.cumulants.push_back(step.cumulant);
      seg.obs.push_back(step.observation);
      const RecurrentState before = state;
      state = agent_.observe(actor, Var::constant(step.observation.reshaped({1, O})), Var::constant(one_hot(a, A)),
                             state);

      if (seg.actions.size() == T || step.done) {
        replay_.push(seg.close(T, task, step.done));
        if (learn_ready()) {
          for (std::size_t u = 0; u < cfg_.updates_per_segment; ++u) learner_step();
          actor = Bindings(online_, false);
        }
        OpenSegment next;
        next.obs.push_back(step.observation);
        next.first_prev_action = a;
        next.initial_state = state_arrays(before);
        seg = std::move(next);
      }

      if (cfg_.log_every > 0 && env_steps_ % cfg_.log_every == 0) log_training(result, eps);
      if (cfg_.eval_every > 0 && env_steps_ % cfg_.eval_every == 0) evaluate(result);
      if (step.done) {
        ++episodes_;
        return_sum_ += ret;
        ++return_count_;
        return;
      }
      if (env_steps_ >= cfg_.total_steps) return;
    }
  }

  bool learn_ready() const { return replay_.size() >= std::max(cfg_.min_replay, cfg_.batch_size); }

  void learner_step() {
    const Batch batch = make_batch(replay_.sample(cfg_.batch_size, sampler_rng_), cfg_.arch.num_actions);
    const Bindings on(online_, true), tg(target_, false);
    const LossTerms terms = compute_losses(agent_, on, tg, batch, cfg_.learn);
    const Real total = terms.total.value().item();
    if (!std::isfinite(total)) {
      const fs::path dir = !out_.checkpoint_dir.empty() ? out_.checkpoint_dir
                           : out_.metrics_csv.has_parent_path() ? out_.metrics_csv.parent_path()
                                                                : fs::temp_directory_path();
      fs::create_directories(dir);
      const fs::path dump = dir / ("nan_batch_step" + std::to_string(learner_steps_) + ".ckpt");
      save_checkpoint(dump, batch_dump(batch));
      throw NumericError("non-finite loss at learner step " + std::to_string(learner_steps_) + " (L_Q " +
                         std::to_string(terms.q.value().item()) + ", L_psi " + std::to_string(terms.psi.value().item()) +
                         ", L_phi " + std::to_string(terms.phi.value().item()) + "); batch dumped to " + dump.string());
    }
    const GradMap g = grad(terms.total, on);
    AdamResult res = adam_step(online_, g, cfg_.adam);
    online_ = std::move(res.params);
    ++learner_steps_;
    if (learner_steps_ % cfg_.target_period == 0) sync_target(online_, target_);

    loss_q_ += terms.q.value().item();
    loss_psi_ += terms.psi.value().item();
    loss_phi_ += terms.phi.value().item();
    grad_norm_ = res.grad_norm;
    ++updates_;
  }

  void log_training(TrainResult& result, Real eps) {
    MetricRow row;
    if (updates_ > 0) {
      const Real n = static_cast<Real>(updates_);
      row.loss_q = loss_q_ / n;
      if (agent_.has_sf()) row.loss_psi = loss_psi_ / n;
      if (agent_.learns_cumulants()) row.loss_phi = loss_phi_ / n;
      row.grad_norm = grad_norm_;
    }
    row.epsilon = eps;
    if (return_count_ > 0) row.train_return = return_sum_ / static_cast<Real>(return_count_);
    emit(result, std::move(row));
    loss_q_ = loss_psi_ = loss_phi_ = grad_norm_ = return_sum_ = 0;
    updates_ = return_count_ = 0;
  }

  void evaluate(TrainResult& result) {
    for (const Array& task : cfg_.eval_tasks) {
      const auto stats = evaluate_agent(agent_, online_, cfg_.env, task, cfg_.train_tasks, cfg_.eval_episodes,
                                        mix_seed(cfg_.seed, kEvalStream));
      MetricRow row;
      row.eval_task = to_vector(task);
      row.eval_return = stats.mean_return();
      if (!stats.prediction_errors.empty()) row.reward_pred_err = stats.mean_prediction_error();
      emit(result, std::move(row));
    }
    writer_.flush();
  }

  void save() {
    fs::create_directories(out_.checkpoint_dir);
    writer_.flush();
    save_checkpoint(out_.checkpoint_dir / "online.ckpt", online_);
    save_checkpoint(out_.checkpoint_dir / "target.ckpt", target_);
    save_checkpoint(out_.checkpoint_dir / "replay.ckpt", encode_replay(replay_));
    nlohmann::json j;
    j["format"] = kStateFormat;
    j["seed"] = cfg_.seed;
    j["env_steps"] = env_steps_;
    j["learner_steps"] = learner_steps_;
    j["episodes"] = episodes_;
    j["next_checkpoint"] = next_checkpoint_;
    j["actor_rng"] = actor_rng_.state();
    j["sampler_rng"] = sampler_rng_.state();
    j["acc"] = {{"loss_q", loss_q_},         {"loss_psi", loss_psi_},   {"loss_phi", loss_phi_},
                {"grad_norm", grad_norm_},   {"updates", updates_},     {"return_sum", return_sum_},
                {"return_count", return_count_}};
    j["csv_bytes"] = writer_.csv_bytes();
    j["jsonl_bytes"] = writer_.jsonl_bytes();
    const fs::path tmp = state_file().string() + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      f << j.dump(2) << "\n";
      if (!f) throw ConfigError("cannot write " + tmp.string());
    }
    fs::rename(tmp, state_file());
  }

  void load() {
    std::ifstream f(state_file());
    const nlohmann::json j = nlohmann::json::parse(f);
    if (j.at("format").get<int>() != kStateFormat) throw ConfigError("unsupported trainer state format");
    if (j.at("seed").get<std::uint64_t>() != cfg_.seed) throw ConfigError("checkpoint was written for another seed");
    online_ = load_checkpoint(out_.checkpoint_dir / "online.ckpt");
    target_ = load_checkpoint(out_.checkpoint_dir / "target.ckpt");
    decode_replay(load_checkpoint(out_.checkpoint_dir / "replay.ckpt"), replay_);
    env_steps_ = j.at("env_steps").get<std::size_t>();
    learner_steps_ = j.at("learner_steps").get<std::size_t>();
    episodes_ = j.at("episodes").get<std::size_t>();
    next_checkpoint_ = j.at("next_checkpoint").get<std::size_t>();
    actor_rng_.set_state(j.at("actor_rng").get<std::string>());
    sampler_rng_.set_state(j.at("sampler_rng").get<std::string>());
    const auto& acc = j.at("acc");
    loss_q_ = acc.at("loss_q").get<Real>();
    loss_psi_ = acc.at("loss_psi").get<Real>();
    loss_phi_ = acc.at("loss_phi").get<Real>();
    grad_norm_ = acc.at("grad_norm").get<Real>();
    updates_ = acc.at("updates").get<std::size_t>();
    return_sum_ = acc.at("return_sum").get<Real>();
    return_count_ = acc.at("return_count").get<std::size_t>();
    csv_bytes_ = j.at("csv_bytes").get<std::uint64_t>();
    jsonl_bytes_ = j.at("jsonl_bytes").get<std::uint64_t>();
  }

  const TrainConfig& cfg_;
  const TrainOutputs& out_;
  Agent agent_;
  envs::GridWorld env_;
  ReplayBuffer replay_;
  Rng actor_rng_, sampler_rng_;
  MetricsWriter writer_;
  std::chrono::steady_clock::time_point started_;
  ParamSet online_, target_;

  std::size_t env_steps_ = 0, learner_steps_ = 0, episodes_ = 0, next_checkpoint_ = 0;
  Real loss_q_ = 0, loss_psi_ = 0, loss_phi_ = 0, grad_norm_ = 0, return_sum_ = 0;
  std::size_t updates_ = 0, return_count_ = 0;
  std::uint64_t csv_bytes_ = 0, jsonl_bytes_ = 0;
};

}  // namespace

void TrainConfig::validate() const {
  arch.validate();
  env.validate();
  learn.validate();
  if (arch.obs_dim != env.observation_size()) {
    throw ConfigError("arch.obs_dim " + std::to_string(arch.obs_dim) + " does not match the environment's " +
                      std::to_string(env.observation_size()));
  }
  if (arch.task_dim != static_cast<std::size_t>(env.num_categories)) {
    throw ConfigError("task dimension must equal the number of object categories");
  }
  if (train_tasks.empty()) throw ConfigError("at least one train task is required");
  for (const auto* set : {&train_tasks, &eval_tasks})
    for (const auto& w : *set)
      if (w.size() != arch.task_dim) throw ConfigError("task vectors must have dimension " + std::to_string(arch.task_dim));
  if (trace_length == 0) throw ConfigError("trace_length must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (replay_capacity < batch_size) throw ConfigError("replay_capacity must hold at least one batch");
  if (target_period == 0) throw ConfigError("target_period must be positive");
  if (!(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_end >= 0 && epsilon_end <= 1)) {
    throw ConfigError("epsilon bounds must lie in [0, 1]");
  }
  if (!(epsilon_fraction > 0 && epsilon_fraction <= 1)) throw ConfigError("epsilon_fraction must lie in (0, 1]");
}

Real epsilon_at(const TrainConfig& config, std::size_t step) {
  const Real horizon = config.epsilon_fraction * static_cast<Real>(config.total_steps);
  if (horizon <= 0 || static_cast<Real>(step) >= horizon) return config.epsilon_end;
  const Real frac = static_cast<Real>(step) / horizon;
  return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start);
}

void sync_target(const ParamSet& online, ParamSet& target) {
  for (const auto& path : online.trainable_paths()) target.set(path, online.at(path));
}

TrainResult train(const TrainConfig& config, const TrainOutputs& outputs) {
  config.validate();
  Trainer trainer(config, outputs);
  return trainer.run();
}

}  // namespace msfa::learn
