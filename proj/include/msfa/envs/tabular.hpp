#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "msfa/numcore/array.hpp"
#include "msfa/numcore/rng.hpp"

namespace msfa::envs {

/// Fully observed MDP with vector cumulants φ*(s, a, s') ∈ R^d.
struct TabularMDP {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::size_t feature_dim = 0;
  std::vector<Real> transitions;  // [s][a][s'] row-major
  std::vector<Real> cumulants;    // [s][a][s'][d] row-major
  Real discount = 0.9;

  TabularMDP() = default;
  TabularMDP(std::size_t states, std::size_t actions, std::size_t dim, Real gamma);

  Real& p(std::size_t s, std::size_t a, std::size_t s2) { return transitions[(s * num_actions + a) * num_states + s2]; }
  Real p(std::size_t s, std::size_t a, std::size_t s2) const {
    return transitions[(s * num_actions + a) * num_states + s2];
  }
  std::span<Real> phi(std::size_t s, std::size_t a, std::size_t s2) {
    return {cumulants.data() + ((s * num_actions + a) * num_states + s2) * feature_dim, feature_dim};
  }
  std::span<const Real> phi(std::size_t s, std::size_t a, std::size_t s2) const {
    return {cumulants.data() + ((s * num_actions + a) * num_states + s2) * feature_dim, feature_dim};
  }

  /// Throws ContractError unless every row sums to 1 within 1e-12 and γ ∈ [0, 1).
  void validate() const;
};

/// Row-stochastic [state][action] table.
struct TabularPolicy {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<Real> probs;

  TabularPolicy() = default;
  TabularPolicy(std::size_t states, std::size_t actions);
  static TabularPolicy deterministic(std::span<const std::size_t> actions, std::size_t num_actions);

  Real& operator()(std::size_t s, std::size_t a) { return probs[s * num_actions + a]; }
  Real operator()(std::size_t s, std::size_t a) const { return probs[s * num_actions + a]; }
  void validate() const;
};

struct RandomMDPOptions {
  std::size_t states = 6;
  std::size_t actions = 3;
  std::size_t dim = 2;
  Real discount = 0.9;
  bool deterministic = false;
  std::size_t support = 3;  // successor states per (s, a) row when stochastic
};

/// Random MDP with uniform [0, 1) cumulant entries.
TabularMDP random_mdp(Rng& rng, const RandomMDPOptions& options);

struct Transition {
  std::size_t state;
  std::size_t action;
  std::size_t next_state;
  std::vector<Real> cumulant;
};

/// Samples `steps` transitions from `start`. `first_action` overrides the
/// policy on the first step (used to estimate ψ(s, a) rather than ψ(s)).
std::vector<Transition> tabular_rollout(const TabularMDP& mdp, const TabularPolicy& policy, std::uint64_t seed,
                                        std::size_t steps, std::size_t start,
                                        std::optional<std::size_t> first_action = std::nullopt);

}  // namespace msfa::envs
