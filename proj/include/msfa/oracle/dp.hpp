#pragma once

#include <span>
#include <string>
#include <vector>

#include "msfa/envs/tabular.hpp"

namespace msfa::oracle {

using envs::TabularMDP;
using envs::TabularPolicy;

/// Exact successor features ψ^π[s][a] ∈ R^d.
struct ExactSF {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::size_t feature_dim = 0;
  std::vector<Real> psi;  // [s][a][d]
  Real residual = 0;      // sup-norm Bellman residual at termination
  std::size_t iterations = 0;

  std::span<const Real> at(std::size_t s, std::size_t a) const {
    return {psi.data() + (s * num_actions + a) * feature_dim, feature_dim};
  }
  Real q(std::size_t s, std::size_t a, std::span<const Real> w) const;
  /// Q[s][a] = ψ(s,a)ᵀw for every pair.
  std::vector<Real> q_table(std::span<const Real> w) const;
};

/// Vector policy evaluation with φ* as pseudo-reward. Iterates until the
/// sup-norm residual is below 1e-12 and then keeps going while it still
/// shrinks, so the result sits at the floating-point fixpoint.
ExactSF exact_sf(const TabularMDP& mdp, const TabularPolicy& pi);

/// Sup-norm of ψ - (E[φ*] + γ P_π ψ).
Real sf_bellman_residual(const TabularMDP& mdp, const TabularPolicy& pi, const ExactSF& sf);

/// Scalar policy evaluation of r = φ*ᵀw. Returns Q[s][a].
std::vector<Real> evaluate_q(const TabularMDP& mdp, const TabularPolicy& pi, std::span<const Real> w);

/// Value iteration for r = φ*ᵀw. Returns Q*[s][a].
std::vector<Real> optimal_q(const TabularMDP& mdp, std::span<const Real> w);

/// Deterministic greedy policy of a Q table, lowest-index ties.
TabularPolicy greedy_policy(std::span<const Real> q, std::size_t states, std::size_t actions);

struct GpiReport {
  bool ok = true;
  Real min_margin = 0;
  std::size_t worst_state = 0;
  std::size_t worst_action = 0;
  std::vector<Real> margins;        // [s][a] Q^gpi - max_i Q^{π_i}
  std::vector<Real> state_margins;  // min over actions
  TabularPolicy gpi_policy;
  std::string describe() const;
};

/// Builds the GPI policy from the exact SFs of each base policy, evaluates
/// it exactly under w_test and compares with every base policy's action
/// values under w_test.
GpiReport gpi_value_check(const TabularMDP& mdp, std::span<const TabularPolicy> base, std::span<const Real> w_test,
                          Real tolerance = 1e-10);

struct DecompositionReport {
  bool ok = true;
  Real block_gap = 0;   // max |ψᵀw - Σ_k ψ^kᵀw^k|
  Real scalar_gap = 0;  // max |ψᵀw - Q^π from scalar evaluation|
  std::string describe() const;
};

/// Checks that action values split over contiguous cumulant blocks.
/// `blocks` lists the block widths and must sum to d.
DecompositionReport decomposition_check(const TabularMDP& mdp, const TabularPolicy& pi,
                                        std::span<const std::size_t> blocks, std::span<const Real> w,
                                        Real block_tolerance = 1e-12, Real scalar_tolerance = 1e-10);

}  // namespace msfa::oracle
