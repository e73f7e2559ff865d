#pragma once

#include <functional>
#include <vector>

#include "msfa/arch/agent.hpp"
#include "msfa/envs/gridworld.hpp"

namespace msfa::learn {

struct StepRecord {
  std::size_t episode = 0;
  std::size_t t = 0;
  int action = 0;
  envs::StepResult result;
  /// φ̃(s_t, a_t, s_{t+1}) for agents with cumulants (the environment's
  /// cumulant for oracle-φ agents); empty otherwise.
  Array predicted_cumulant;
};

using StepObserver = std::function<void(const StepRecord&)>;

struct EpisodeStats {
  std::vector<Real> returns;
  std::vector<Real> prediction_errors;  // per step |r - φ̃ᵀw|
  std::vector<std::vector<Real>> pickups;  // [episode][category]

  Real mean_return() const;
  Real mean_prediction_error() const;  // NaN when nothing was predicted
};

/// Runs the agent's test-time policy (GPI over `bank` where supported) for
/// `episodes` episodes; episode e starts from layout seed mix_seed(seed, e).
EpisodeStats evaluate_agent(const arch::Agent& agent, const ParamSet& params, const envs::GridConfig& env,
                            const Array& task, const std::vector<Array>& bank, std::size_t episodes,
                            std::uint64_t seed, const StepObserver& observer = {});

/// Same protocol for a policy given the ground-truth layout.
using LayoutPolicy = std::function<int(const envs::GridSnapshot&, Rng&)>;
EpisodeStats evaluate_policy(const LayoutPolicy& policy, const envs::GridConfig& env, const Array& task,
                             std::size_t episodes, std::uint64_t seed);

}  // namespace msfa::learn
