#pragma once

#include "msfa/arch/agent.hpp"
#include "msfa/learn/segment.hpp"

namespace msfa::learn {

struct LearnConfig {
  Real discount = 0.99;
  std::size_t nstep = 5;
  Real q_weight = 0.5;
  Real psi_weight = 1.0;
  Real phi_weight = 1.0;

  void validate() const;
};

/// n-step bootstrapped targets for a width-W signal.
///
/// signal [T, B, W] is the per-transition quantity (reward or cumulant),
/// bootstrap [T+1, B, W] the target-network value at each observation.
/// For valid t the window is k = min(n, valid_end - t); the bootstrap term
/// γ^k·bootstrap[t+k] is dropped when the window reaches a terminal step.
/// Masked entries are zero.
Array nstep_targets(const Array& signal, const Array& bootstrap, const Array& mask, const Array& terminal,
                    Real discount, std::size_t nstep);

struct LossTerms {
  Var total;
  Var q;
  Var psi;  // zero for agents without SFs
  Var phi;  // zero unless the agent learns cumulants
  std::size_t valid_steps = 0;
  Array cumulant_signal;  // [T*B, d] cumulants used inside the SF target
};

/// Q, SF and cumulant losses on a batch, each a masked sum divided by the
/// number of valid steps.
///
/// The target network picks a' = argmax_a ψ̄(s, a, w)ᵀw (or Q̄ for UVFA
/// agents) and supplies the bootstrap values. The SF target uses the
/// detached online cumulants, or the environment's cumulants for agents
/// that do not learn them. A non-null `frozen_cumulants` [T*B, d] replaces
/// that signal.
LossTerms compute_losses(const arch::Agent& agent, const Bindings& online, const Bindings& target, const Batch& batch,
                         const LearnConfig& config, const Array* frozen_cumulants = nullptr);

}  // namespace msfa::learn
