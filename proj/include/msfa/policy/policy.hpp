#pragma once

#include <vector>

#include "msfa/arch/agent.hpp"
#include "msfa/envs/gridworld.hpp"
#include "msfa/policy/selection.hpp"

namespace msfa::policy {

/// With probability ε a uniform action, otherwise the lowest-index argmax.
/// Always draws one uniform number, plus one index when exploring.
std::size_t epsilon_greedy(std::span<const Real> q, Real epsilon, Rng& rng);

/// ε-greedy on Q(s, ·, w) for a single agent state (batch 1).
std::size_t act_train(const arch::Agent& agent, const Bindings& b, const arch::RecurrentState& state, const Array& w,
                      Real epsilon, Rng& rng);

struct GpiDecision {
  std::size_t action = 0;
  std::size_t source = 0;
  Array q;  // [A, M]: ψ(s, a, z_i)ᵀ w_test
};

/// Generalised policy improvement over the SF heads of `bank` tasks.
GpiDecision act_gpi(const arch::Agent& agent, const Bindings& b, const arch::RecurrentState& state,
                    const Array& w_test, const std::vector<Array>& bank);

/// Test-time action: GPI for agents that use it, otherwise greedy on
/// Q(s, ·, w_test).
std::size_t act_eval(const arch::Agent& agent, const Bindings& b, const arch::RecurrentState& state,
                     const Array& w_test, const std::vector<Array>& bank);

/// Shortest-path policy with access to the ground-truth layout.
///
/// Breadth-first search over (cell, facing) for a pose that faces an object
/// with positive task weight. Cells 4-adjacent to negative-weight objects
/// are avoided when a path exists without them. Emits pickup when already
/// facing a positive object; with no reachable target, a uniformly random
/// move (rotation or unblocked forward).
int act_bfs_oracle(const envs::GridSnapshot& state, const Array& w, Rng& rng);

}  // namespace msfa::policy
