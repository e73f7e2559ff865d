#include "msfa/learn/evaluate.hpp"

#include <cmath>
#include <limits>

#include "msfa/policy/policy.hpp"

namespace msfa::learn {

namespace {

Real mean_of(const std::vector<Real>& xs) {
  if (xs.empty()) return std::numeric_limits<Real>::quiet_NaN();
  Real s = 0;
  for (Real x : xs) s += x;
  return s / static_cast<Real>(xs.size());
}

void count_pickup(EpisodeStats& stats, const envs::StepResult& r) {
  if (r.picked_category >= 0) stats.pickups.back()[static_cast<std::size_t>(r.picked_category)] += 1;
}

}  // namespace

Real EpisodeStats::mean_return() const { return mean_of(returns); }
Real EpisodeStats::mean_prediction_error() const { return mean_of(prediction_errors); }

EpisodeStats evaluate_agent(const arch::Agent& agent, const ParamSet& params, const envs::GridConfig& env_config,
                            const Array& task, const std::vector<Array>& bank, std::size_t episodes,
                            std::uint64_t seed, const StepObserver& observer) {
  const auto& cfg = agent.config();
  if (task.size() != cfg.task_dim) throw DimensionError("task dimension does not match the agent");
  const Bindings b(params, false);
  const std::size_t A = cfg.num_actions, O = env_config.observation_size();
  EpisodeStats stats;
  envs::GridWorld env(env_config);
  for (std::size_t e = 0; e < episodes; ++e) {
    const Array first = env.reset(task, mix_seed(seed, e));
    arch::RecurrentState state = agent.observe(b, Var::constant(first.reshaped({1, O})),
                                               Var::constant(Array(Shape{1, A})), agent.initial_state(1));
    stats.pickups.emplace_back(static_cast<std::size_t>(env_config.num_categories), Real{0});
    Real ret = 0;
    for (std::size_t t = 0; !env.done(); ++t) {
      const auto action = static_cast<int>(policy::act_eval(agent, b, state, task, bank));
      StepRecord rec;
      rec.episode = e;
      rec.t = t;
      rec.action = action;
      rec.result = env.step(action);
      Array onehot(Shape{1, A});
      onehot[static_cast<std::size_t>(action)] = 1;
      const Var prev = Var::constant(onehot);
      arch::RecurrentState next =
          agent.observe(b, Var::constant(rec.result.observation.reshaped({1, O})), prev, state);
      if (agent.learns_cumulants()) {
        const Array phi = agent.cumulants(b, state, prev, next).value();
        rec.predicted_cumulant = phi.reshaped({cfg.task_dim});
      } else if (agent.has_sf()) {
        rec.predicted_cumulant = rec.result.cumulant;
      }
      if (rec.predicted_cumulant.size() == cfg.task_dim) {
        stats.prediction_errors.push_back(
            std::abs(rec.result.reward - envs::task_dot(rec.predicted_cumulant, task)));
      }
      ret += rec.result.reward;
      count_pickup(stats, rec.result);
      if (observer) observer(rec);
      state = std::move(next);
    }
    stats.returns.push_back(ret);
  }
  return stats;
}

EpisodeStats evaluate_policy(const LayoutPolicy& policy, const envs::GridConfig& env_config, const Array& task,
                             std::size_t episodes, std::uint64_t seed) {
  EpisodeStats stats;
  envs::GridWorld env(env_config);
  for (std::size_t e = 0; e < episodes; ++e) {
    env.reset(task, mix_seed(seed, e));
    Rng rng(mix_seed(mix_seed(seed, e), 1));
    stats.pickups.emplace_back(static_cast<std::size_t>(env_config.num_categories), Real{0});
    Real ret = 0;
    while (!env.done()) {
      const auto r = env.step(policy(env.ground_truth_state(), rng));
      ret += r.reward;
      count_pickup(stats, r);
    }
    stats.returns.push_back(ret);
  }
  return stats;
}

}  // namespace msfa::learn
