#include "msfa/learn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "msfa/policy/selection.hpp"

namespace msfa::learn {

using arch::Agent;
using arch::RecurrentState;

void LearnConfig::validate() const {
  if (!(discount >= 0 && discount < 1)) throw ConfigError("discount must lie in [0, 1)");
  if (nstep == 0) throw ConfigError("nstep must be at least 1");
  if (q_weight < 0 || psi_weight < 0 || phi_weight < 0) throw ConfigError("loss weights must be non-negative");
}

Array nstep_targets(const Array& signal, const Array& bootstrap, const Array& mask, const Array& terminal,
                    Real discount, std::size_t nstep) {
  if (signal.rank() != 3) throw DimensionError("signal must be [T, B, W]");
  const std::size_t T = signal.dim(0), B = signal.dim(1), W = signal.dim(2);
  if (bootstrap.shape() != Shape{T + 1, B, W}) throw DimensionError("bootstrap must be [T+1, B, W]");
  if (mask.shape() != Shape{T, B} || terminal.shape() != Shape{T, B}) throw DimensionError("mask must be [T, B]");

  Array out(Shape{T, B, W});
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t valid = 0;
    while (valid < T && mask[valid * B + b] == 1) ++valid;
    std::size_t stop = 0;  // one past the terminal transition, 0 if none
    for (std::size_t t = 0; t < valid; ++t)
      if (terminal[t * B + b] == 1) {
        stop = t + 1;
        break;
      }
    for (std::size_t t = 0; t < valid; ++t) {
      const std::size_t k = std::min(nstep, valid - t);
      const bool bootstraps = stop == 0 || t + k < stop;
      const std::size_t steps = bootstraps ? k : stop - t;
      for (std::size_t j = 0; j < W; ++j) {
        Real acc = 0, g = 1;
        for (std::size_t i = 0; i < steps; ++i) {
          acc += g * signal[((t + i) * B + b) * W + j];
          g *= discount;
        }
        if (bootstraps) acc += g * bootstrap[((t + steps) * B + b) * W + j];
        out[(t * B + b) * W + j] = acc;
      }
    }
  }
  return out;
}

namespace {

Array tile_tasks(const Array& tasks, std::size_t copies) {
  const std::size_t B = tasks.dim(0), d = tasks.dim(1);
  Array out(Shape{copies * B, d});
  for (std::size_t c = 0; c < copies; ++c) std::copy_n(tasks.raw(), B * d, out.raw() + c * B * d);
  return out;
}

// Greedy action per row of q [N, A] and the chosen row of `values` [N, A, W].
Array greedy_select(const Array& q, const Array& values) {
  const std::size_t N = q.dim(0), A = q.dim(1), W = values.dim(2);
  Array out(Shape{N, W});
  for (std::size_t r = 0; r < N; ++r) {
    const std::size_t a = policy::argmax_lowest(std::span<const Real>(q.raw() + r * A, A));
    std::copy_n(values.raw() + (r * A + a) * W, W, out.raw() + r * W);
  }
  return out;
}

Var masked_mean(const Var& squared_rows, const Var& mask, std::size_t count) {
  const Real inv = count > 0 ? Real(1) / static_cast<Real>(count) : Real(0);
  return scale(sum(mul(squared_rows, mask)), inv);
}

}  // namespace

LossTerms compute_losses(const Agent& agent, const Bindings& online, const Bindings& target, const Batch& batch,
                         const LearnConfig& config, const Array* frozen_cumulants) {
  config.validate();
  const auto& cfg = agent.config();
  const std::size_t T = batch.T, B = batch.B, A = cfg.num_actions, d = cfg.task_dim;
  const std::size_t TB = T * B, RB = (T + 1) * B;

  RecurrentState init;
  for (const auto& part : batch.initial_state) init.parts.push_back(Var::constant(part));
  const RecurrentState on_all = arch::stack_states(agent.unroll(online, batch.obs, batch.prev_actions, init));
  const RecurrentState tg_all = arch::stack_states(agent.unroll(target, batch.obs, batch.prev_actions, init));
  const RecurrentState s_t = arch::slice_state(on_all, 0, TB);

  const Array w_all = tile_tasks(batch.tasks, T + 1);
  const Var w_t = Var::constant(w_all);
  const Var w_now = slice(w_t, 0, 0, TB);
  const Var onehot = Var::constant(batch.actions.reshaped({TB, A, 1}));
  const Var mask_rows = Var::constant(batch.mask.reshaped({TB}));
  const Var mask_cols = Var::constant(batch.mask.reshaped({TB, 1}));
  std::size_t count = 0;
  for (Real m : batch.mask.data()) count += m == 1 ? 1 : 0;

  LossTerms out;
  out.valid_steps = count;
  const Var zero = Var::constant(Array(Shape{}));
  out.psi = zero;
  out.phi = zero;

  if (!agent.has_sf()) {
    const Var q_all = agent.q_values(online, s_t, w_now);  // [TB, A]
    const Var q_taken = sum(mul(q_all, reshape(onehot, {TB, A})), 1);
    const Array q_tg = agent.q_values(target, tg_all, w_t).value();
    const Array boot = greedy_select(q_tg, q_tg.reshaped({RB, A, 1}));
    const Array targets = nstep_targets(batch.rewards.reshaped({T, B, 1}), boot.reshaped({T + 1, B, 1}), batch.mask,
                                        batch.terminal, config.discount, config.nstep);
    out.q = masked_mean(square(sub(q_taken, Var::constant(targets.reshaped({TB})))), mask_rows, count);
    out.total = scale(out.q, config.q_weight);
    return out;
  }

  const Var psi_all = agent.sf(online, s_t, w_now);  // [TB, A, d]
  const Var psi_taken = sum(mul(psi_all, onehot), 1);  // [TB, d]
  const Var q_taken = sum(mul(psi_taken, w_now), 1);   // [TB]

  const Array psi_tg = agent.sf(target, tg_all, w_t).value();  // [RB, A, d]
  const Array q_tg = arch::dot_task(Var::constant(psi_tg), w_t).value();
  const Array boot_psi = greedy_select(q_tg, psi_tg);  // [RB, d]
  Array boot_q(Shape{RB, 1});
  for (std::size_t r = 0; r < RB; ++r) {
    Real v = 0;
    for (std::size_t j = 0; j < d; ++j) v += boot_psi[r * d + j] * w_all[r * d + j];
    boot_q[r] = v;
  }

  Array phi_signal;
  if (agent.learns_cumulants()) {
    const RecurrentState s_next = arch::slice_state(on_all, B, RB);
    const Var phi = agent.cumulants(online, s_t, reshape(onehot, {TB, A}), s_next);  // [TB, d]
    phi_signal = phi.value();
    const Var r_hat = sum(mul(phi, w_now), 1);
    out.phi = masked_mean(square(sub(Var::constant(batch.rewards.reshaped({TB})), r_hat)), mask_rows, count);
  } else {
    phi_signal = batch.cumulants.reshaped({TB, d});
  }
  if (frozen_cumulants) {
    if (frozen_cumulants->shape() != Shape{TB, d}) throw DimensionError("frozen cumulants must be [T*B, d]");
    phi_signal = *frozen_cumulants;
  }
  out.cumulant_signal = phi_signal;

  const Array q_targets = nstep_targets(batch.rewards.reshaped({T, B, 1}), boot_q.reshaped({T + 1, B, 1}), batch.mask,
                                        batch.terminal, config.discount, config.nstep);
  const Array psi_targets = nstep_targets(phi_signal.reshaped({T, B, d}), boot_psi.reshaped({T + 1, B, d}),
                                          batch.mask, batch.terminal, config.discount, config.nstep);

  out.q = masked_mean(square(sub(q_taken, Var::constant(q_targets.reshaped({TB})))), mask_rows, count);
  out.psi = masked_mean(square(sub(psi_taken, Var::constant(psi_targets.reshaped({TB, d})))), mask_cols, count);
  out.total = add(add(scale(out.q, config.q_weight), scale(out.psi, config.psi_weight)),
                  scale(out.phi, config.phi_weight));
  return out;
}

}  // namespace msfa::learn
