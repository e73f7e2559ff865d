#include "msfa/envs/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace msfa::envs {

namespace {

std::size_t sample(Rng& rng, std::span<const Real> probs) {
  const Real u = static_cast<Real>(rng.uniform());
  Real acc = 0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

}  // namespace

TabularMDP::TabularMDP(std::size_t states, std::size_t actions, std::size_t dim, Real gamma)
    : num_states(states),
      num_actions(actions),
      feature_dim(dim),
      transitions(states * actions * states, 0),
      cumulants(states * actions * states * dim, 0),
      discount(gamma) {}

void TabularMDP::validate() const {
  if (num_states == 0 || num_actions == 0) throw ContractError("tabular MDP needs at least one state and action");
  if (transitions.size() != num_states * num_actions * num_states ||
      cumulants.size() != num_states * num_actions * num_states * feature_dim) {
    throw ContractError("tabular MDP tensors do not match declared sizes");
  }
  if (!(discount >= 0 && discount < 1)) throw ContractError("discount must lie in [0, 1)");
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t a = 0; a < num_actions; ++a) {
      Real total = 0;
      for (std::size_t s2 = 0; s2 < num_states; ++s2) {
        const Real q = p(s, a, s2);
        if (!(q >= 0)) throw ContractError("negative transition probability");
        total += q;
      }
      if (std::abs(total - 1) > 1e-12) {
        throw ContractError("transition row (" + std::to_string(s) + "," + std::to_string(a) + ") sums to " +
                            std::to_string(total));
      }
    }
  }
}

TabularPolicy::TabularPolicy(std::size_t states, std::size_t actions)
    : num_states(states), num_actions(actions), probs(states * actions, 0) {}

TabularPolicy TabularPolicy::deterministic(std::span<const std::size_t> actions, std::size_t num_actions) {
  TabularPolicy pi(actions.size(), num_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) pi(s, actions[s]) = 1;
  return pi;
}

void TabularPolicy::validate() const {
  for (std::size_t s = 0; s < num_states; ++s) {
    Real total = 0;
    for (std::size_t a = 0; a < num_actions; ++a) {
      if (!((*this)(s, a) >= 0)) throw ContractError("negative policy probability");
      total += (*this)(s, a);
    }
    if (std::abs(total - 1) > 1e-12) throw ContractError("policy row " + std::to_string(s) + " is not a distribution");
  }
}

TabularMDP random_mdp(Rng& rng, const RandomMDPOptions& o) {
  TabularMDP mdp(o.states, o.actions, o.dim, o.discount);
  for (std::size_t s = 0; s < o.states; ++s) {
    for (std::size_t a = 0; a < o.actions; ++a) {
      if (o.deterministic) {
        mdp.p(s, a, rng.index(o.states)) = 1;
      } else {
        const std::size_t k = std::min(std::max<std::size_t>(o.support, 1), o.states);
        std::vector<std::size_t> targets;
        while (targets.size() < k) {
          const std::size_t t = rng.index(o.states);
          if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
        }
        std::vector<Real> weights(k);
        Real total = 0;
        for (auto& w : weights) total += (w = static_cast<Real>(0.05 + rng.uniform()));
        for (std::size_t i = 0; i < k; ++i) mdp.p(s, a, targets[i]) = weights[i] / total;
        // Absorb normalisation round-off into the first target.
        Real row = 0;
        for (std::size_t s2 = 0; s2 < o.states; ++s2) row += mdp.p(s, a, s2);
        mdp.p(s, a, targets[0]) += 1 - row;
      }
      for (std::size_t s2 = 0; s2 < o.states; ++s2)
        for (Real& f : mdp.phi(s, a, s2)) f = static_cast<Real>(rng.uniform());
    }
  }
  mdp.validate();
  return mdp;
}

std::vector<Transition> tabular_rollout(const TabularMDP& mdp, const TabularPolicy& policy, std::uint64_t seed,
                                        std::size_t steps, std::size_t start,
                                        std::optional<std::size_t> first_action) {
  policy.validate();
  if (start >= mdp.num_states) throw ContractError("rollout start state out of range");
  Rng rng(seed);
  std::vector<Transition> out;
  out.reserve(steps);
  std::size_t s = start;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t a =
        (t == 0 && first_action) ? *first_action
                                 : sample(rng, {policy.probs.data() + s * policy.num_actions, policy.num_actions});
    const std::size_t s2 =
        sample(rng, {mdp.transitions.data() + (s * mdp.num_actions + a) * mdp.num_states, mdp.num_states});
    const auto f = mdp.phi(s, a, s2);
    out.push_back({s, a, s2, std::vector<Real>(f.begin(), f.end())});
    s = s2;
  }
  return out;
}

}  // namespace msfa::envs
