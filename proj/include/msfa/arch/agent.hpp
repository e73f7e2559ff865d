#pragma once

#include <memory>
#include <string>
#include <vector>

#include "msfa/arch/layers.hpp"

namespace msfa::arch {

enum class AgentKind { kMsfa, kMsfaNoGpi, kMsfaEntangled, kUvfa, kUvfaFarm, kUsfaOracle, kUsfaLearned };

std::string kind_name(AgentKind kind);
/// Accepts the names produced by kind_name; throws ConfigError otherwise.
AgentKind parse_kind(const std::string& name);
const std::vector<AgentKind>& all_kinds();

struct ArchConfig {
  AgentKind kind = AgentKind::kMsfa;
  std::size_t obs_dim = 0;
  std::size_t num_actions = 4;
  std::size_t task_dim = 4;

  // Modular state (MSFA family and UVFA+FARM).
  std::size_t num_modules = 4;
  std::size_t module_size = 150;
  std::size_t projection_dim = 16;  // attention d_q
  std::size_t heads = 2;
  bool zero_key = true;

  // Monolithic state (UVFA, USFA).
  std::size_t lstm_size = 256;

  std::vector<std::size_t> encoder = {128, 64};  // f_z widths, ReLU after each
  std::vector<std::size_t> phi_hidden = {256};
  std::vector<std::size_t> psi_hidden = {128};
  std::vector<std::size_t> q_hidden = {128};

  void validate() const;
  bool modular_state() const;
  std::size_t cumulant_width() const { return task_dim / num_modules; }
};

/// Hidden sizes matching the BabyAI column of the reference hyperparameter
/// table for modular agents, with LSTM widths chosen for parameter parity.
ArchConfig babyai_preset(AgentKind kind, std::size_t obs_dim, std::size_t task_dim = 4);

/// Recurrent agent state. Modular agents hold one [B, m] entry per module;
/// LSTM agents hold {h, c}.
struct RecurrentState {
  std::vector<Var> parts;
  std::size_t batch() const { return parts.empty() ? 0 : parts[0].dim(0); }
};

/// Concatenates states along the batch axis.
RecurrentState stack_states(const std::vector<RecurrentState>& states);
/// Rows [begin, end) of every part.
RecurrentState slice_state(const RecurrentState& state, std::size_t begin, std::size_t end);
RecurrentState detach_state(const RecurrentState& state);

/// Task-conditioned recurrent agent. Stateless: all outputs are functions of
/// (bindings, inputs), so one instance can serve online and target
/// parameters alike.
class Agent {
 public:
  explicit Agent(ArchConfig config);

  const ArchConfig& config() const { return config_; }
  AgentKind kind() const { return config_.kind; }
  bool has_sf() const;
  bool learns_cumulants() const;
  bool modular_heads() const;  // per-module φ/ψ blocks
  bool uses_gpi() const;

  ParamSet init_params(std::uint64_t seed) const;

  RecurrentState initial_state(std::size_t batch) const;
  /// z = f_z(obs) for a batch of observations.
  Var encode(const Bindings& b, const Var& obs) const;
  /// One recurrent update from an encoded observation and the previous
  /// action one-hot ([B, A], zero at episode start).
  RecurrentState step(const Bindings& b, const Var& z, const Var& prev_action, const RecurrentState& prev) const;
  RecurrentState observe(const Bindings& b, const Var& obs, const Var& prev_action, const RecurrentState& prev) const {
    return step(b, encode(b, obs), prev_action, prev);
  }
  /// Runs the recurrence over obs [L, B, O] and prev_actions [L, B, A];
  /// returns the L post-update states.
  std::vector<RecurrentState> unroll(const Bindings& b, const Array& obs, const Array& prev_actions,
                                     const RecurrentState& initial) const;

  /// ψ(s, a, w) for every action: [B, A, d].
  Var sf(const Bindings& b, const RecurrentState& s, const Var& w) const;
  /// Q(s, a, w): [B, A]. ψᵀw for SF agents.
  Var q_values(const Bindings& b, const RecurrentState& s, const Var& w) const;
  /// φ̃(s_t, a_t, s_{t+1}): [B, d].
  Var cumulants(const Bindings& b, const RecurrentState& s_t, const Var& action, const RecurrentState& s_next) const;

  /// Attention weights used by the update out of `prev`: [n, R, B, heads].
  Var attention_weights(const Bindings& b, const Var& prev_action, const RecurrentState& prev) const;

 private:
  AttentionSpec attention_spec() const;
  Var all_modules(const RecurrentState& s) const;

  ArchConfig config_;
};

std::size_t parameter_count(const ArchConfig& config);

/// Q = ψᵀw for ψ [B, A, d] and w [B, d].
Var dot_task(const Var& psi, const Var& w);

}  // namespace msfa::arch
