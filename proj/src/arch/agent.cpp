#include "msfa/arch/agent.hpp"

#include <algorithm>

namespace msfa::arch {

namespace {

std::string module_prefix(std::size_t k) { return "core/m" + std::to_string(k); }

const std::vector<std::pair<AgentKind, const char*>>& kind_table() {
  static const std::vector<std::pair<AgentKind, const char*>> table{
      {AgentKind::kMsfa, "msfa"},
      {AgentKind::kMsfaNoGpi, "msfa-no-gpi"},
      {AgentKind::kMsfaEntangled, "msfa-entangled"},
      {AgentKind::kUvfa, "uvfa"},
      {AgentKind::kUvfaFarm, "uvfa-farm"},
      {AgentKind::kUsfaOracle, "usfa-oracle-phi"},
      {AgentKind::kUsfaLearned, "usfa-learned-phi"},
  };
  return table;
}

}  // namespace

std::string kind_name(AgentKind kind) {
  for (const auto& [k, name] : kind_table())
    if (k == kind) return name;
  throw ConfigError("unknown agent kind");
}

AgentKind parse_kind(const std::string& name) {
  for (const auto& [k, n] : kind_table())
    if (name == n) return k;
  std::string known;
  for (const auto& [k, n] : kind_table()) known += (known.empty() ? "" : ", ") + std::string(n);
  throw ConfigError("unknown agent kind '" + name + "' (expected one of: " + known + ")");
}

const std::vector<AgentKind>& all_kinds() {
  static const std::vector<AgentKind> kinds = [] {
    std::vector<AgentKind> out;
    for (const auto& [k, n] : kind_table()) out.push_back(k);
    return out;
  }();
  return kinds;
}

bool ArchConfig::modular_state() const {
  switch (kind) {
    case AgentKind::kMsfa:
    case AgentKind::kMsfaNoGpi:
    case AgentKind::kMsfaEntangled:
    case AgentKind::kUvfaFarm:
      return true;
    default:
      return false;
  }
}

void ArchConfig::validate() const {
  if (obs_dim == 0 || num_actions == 0 || task_dim == 0) throw ConfigError("obs_dim, num_actions and task_dim must be positive");
  if (encoder.empty()) throw ConfigError("observation encoder needs at least one layer");
  if (modular_state()) {
    if (num_modules == 0 || module_size == 0) throw ConfigError("module count and size must be positive");
    if (heads == 0 || projection_dim % heads != 0) throw ConfigError("attention heads must divide projection_dim");
  } else if (lstm_size == 0) {
    throw ConfigError("lstm_size must be positive");
  }
  if ((kind == AgentKind::kMsfa || kind == AgentKind::kMsfaNoGpi) && task_dim % num_modules != 0) {
    throw ConfigError("task dimension " + std::to_string(task_dim) + " is not divisible by " +
                      std::to_string(num_modules) + " modules");
  }
}

ArchConfig babyai_preset(AgentKind kind, std::size_t obs_dim, std::size_t task_dim) {
  ArchConfig c;
  c.kind = kind;
  c.obs_dim = obs_dim;
  c.task_dim = task_dim;
  c.num_modules = 4;
  c.module_size = 150;
  c.projection_dim = 16;
  c.heads = 2;
  c.phi_hidden = {256};
  c.psi_hidden = {128};
  c.q_hidden = {128};
  switch (kind) {
    case AgentKind::kUvfa: c.lstm_size = 320; break;
    case AgentKind::kUsfaOracle: c.lstm_size = 320; break;
    case AgentKind::kUsfaLearned: c.lstm_size = 256; break;
    case AgentKind::kMsfaEntangled: c.phi_hidden = {48}; break;
    default: break;
  }
  return c;
}

RecurrentState stack_states(const std::vector<RecurrentState>& states) {
  if (states.empty()) throw ContractError("cannot stack an empty state list");
  if (states.size() == 1) return states[0];
  RecurrentState out;
  for (std::size_t p = 0; p < states[0].parts.size(); ++p) {
    std::vector<Var> rows;
    rows.reserve(states.size());
    for (const auto& s : states) rows.push_back(s.parts.at(p));
    out.parts.push_back(concat(rows, 0));
  }
  return out;
}

RecurrentState slice_state(const RecurrentState& state, std::size_t begin, std::size_t end) {
  RecurrentState out;
  for (const auto& p : state.parts) out.parts.push_back(slice(p, 0, begin, end));
  return out;
}

RecurrentState detach_state(const RecurrentState& state) {
  RecurrentState out;
  for (const auto& p : state.parts) out.parts.push_back(detach(p));
  return out;
}

Var dot_task(const Var& psi, const Var& w) {
  return sum(psi * reshape(w, {w.dim(0), 1, w.dim(1)}), 2);
}

Agent::Agent(ArchConfig config) : config_(std::move(config)) { config_.validate(); }

bool Agent::has_sf() const { return kind() != AgentKind::kUvfa && kind() != AgentKind::kUvfaFarm; }
bool Agent::learns_cumulants() const { return has_sf() && kind() != AgentKind::kUsfaOracle; }
bool Agent::modular_heads() const { return kind() == AgentKind::kMsfa || kind() == AgentKind::kMsfaNoGpi; }
bool Agent::uses_gpi() const { return has_sf() && kind() != AgentKind::kMsfaNoGpi; }

AttentionSpec Agent::attention_spec() const {
  return {config_.num_modules, config_.module_size, config_.num_actions, config_.projection_dim, config_.heads,
          config_.zero_key};
}

ParamSet Agent::init_params(std::uint64_t seed) const {
  const auto& c = config_;
  Rng rng(seed);
  ParamSet p;
  std::size_t width = c.obs_dim;
  for (std::size_t i = 0; i < c.encoder.size(); ++i) {
    init_linear(p, rng, "enc/l" + std::to_string(i), width, c.encoder[i]);
    width = c.encoder[i];
  }
  const std::size_t z = width;
  const std::size_t A = c.num_actions, d = c.task_dim;

  std::size_t state_width;  // width of the state seen by monolithic heads
  if (c.modular_state()) {
    init_attention(p, rng, "attn", attention_spec());
    for (std::size_t k = 0; k < c.num_modules; ++k) init_gru(p, rng, module_prefix(k), z + c.projection_dim, c.module_size);
    state_width = c.num_modules * c.module_size;
  } else {
    init_lstm(p, rng, "core/lstm", z, c.lstm_size);
    state_width = c.lstm_size;
  }

  switch (c.kind) {
    case AgentKind::kMsfa:
    case AgentKind::kMsfaNoGpi: {
      const std::size_t cw = c.cumulant_width();
      init_mlp(p, rng, "phi", 2 * c.module_size + A, c.phi_hidden, cw);
      init_mlp(p, rng, "psi", c.module_size + cw, c.psi_hidden, A * cw);
      break;
    }
    case AgentKind::kMsfaEntangled:
    case AgentKind::kUsfaLearned:
      init_mlp(p, rng, "phi", 2 * state_width + A, c.phi_hidden, d);
      init_mlp(p, rng, "psi", state_width + d, c.psi_hidden, A * d);
      break;
    case AgentKind::kUsfaOracle:
      init_mlp(p, rng, "psi", state_width + d, c.psi_hidden, A * d);
      break;
    case AgentKind::kUvfa:
    case AgentKind::kUvfaFarm:
      init_mlp(p, rng, "q", state_width + d, c.q_hidden, A);
      break;
  }
  return p;
}

RecurrentState Agent::initial_state(std::size_t batch) const {
  RecurrentState s;
  if (config_.modular_state()) {
    for (std::size_t k = 0; k < config_.num_modules; ++k)
      s.parts.push_back(Var::constant(Array(Shape{batch, config_.module_size})));
  } else {
    s.parts.push_back(Var::constant(Array(Shape{batch, config_.lstm_size})));
    s.parts.push_back(Var::constant(Array(Shape{batch, config_.lstm_size})));
  }
  return s;
}

Var Agent::encode(const Bindings& b, const Var& obs) const { return relu_mlp(b, "enc", obs, config_.encoder.size()); }

RecurrentState Agent::step(const Bindings& b, const Var& z, const Var& prev_action, const RecurrentState& prev) const {
  RecurrentState next;
  if (!config_.modular_state()) {
    const auto out = lstm_step(b, "core/lstm", z, prev.parts.at(0), prev.parts.at(1));
    next.parts = {out.h, out.c};
    return next;
  }
  const std::size_t batch = z.dim(0);
  const auto att = attend(b, "attn", attention_spec(), prev.parts, prev_action);
  const Var u = sigtanh_gate(b, "attn", att.queries, att.messages);
  for (std::size_t k = 0; k < config_.num_modules; ++k) {
    const std::vector<Var> in{z, module_rows(u, k, batch)};
    next.parts.push_back(gru_step(b, module_prefix(k), concat(in, 1), prev.parts.at(k)));
  }
  return next;
}

Var Agent::attention_weights(const Bindings& b, const Var& prev_action, const RecurrentState& prev) const {
  if (!config_.modular_state()) throw ContractError(kind_name(kind()) + " has no inter-module attention");
  return attend(b, "attn", attention_spec(), prev.parts, prev_action).weights;
}

std::vector<RecurrentState> Agent::unroll(const Bindings& b, const Array& obs, const Array& prev_actions,
                                          const RecurrentState& initial) const {
  if (obs.rank() != 3 || prev_actions.rank() != 3 || obs.dim(0) != prev_actions.dim(0) ||
      obs.dim(1) != prev_actions.dim(1)) {
    throw DimensionError("unroll expects obs [L,B,O] and prev_actions [L,B,A], got " + shape_string(obs.shape()) +
                         " and " + shape_string(prev_actions.shape()));
  }
  const std::size_t L = obs.dim(0), B = obs.dim(1);
  const Var z = encode(b, Var::constant(obs.reshaped({L * B, obs.dim(2)})));
  const Var acts = Var::constant(prev_actions.reshaped({L * B, prev_actions.dim(2)}));
  std::vector<RecurrentState> out;
  out.reserve(L);
  RecurrentState s = initial;
  for (std::size_t t = 0; t < L; ++t) {
    s = step(b, slice(z, 0, t * B, (t + 1) * B), slice(acts, 0, t * B, (t + 1) * B), s);
    out.push_back(s);
  }
  return out;
}

Var Agent::all_modules(const RecurrentState& s) const {
  if (!config_.modular_state()) return s.parts.at(0);
  return s.parts.size() == 1 ? s.parts[0] : concat(s.parts, 1);
}

Var Agent::sf(const Bindings& b, const RecurrentState& s, const Var& w) const {
  if (!has_sf()) throw ContractError(kind_name(kind()) + " has no successor-feature head");
  const std::size_t B = s.batch(), A = config_.num_actions, d = config_.task_dim;
  if (w.shape() != Shape{B, d}) throw DimensionError("task batch " + shape_string(w.shape()));
  if (modular_heads()) {
    const std::size_t n = config_.num_modules, cw = config_.cumulant_width();
    std::vector<Var> inputs;
    for (std::size_t k = 0; k < n; ++k) {
      const std::vector<Var> parts{s.parts[k], slice(w, 1, k * cw, (k + 1) * cw)};
      inputs.push_back(concat(parts, 1));
    }
    const Var out = mlp(b, "psi", n == 1 ? inputs[0] : concat(inputs, 0), config_.psi_hidden.size() + 1);
    std::vector<Var> blocks;
    for (std::size_t k = 0; k < n; ++k) blocks.push_back(reshape(module_rows(out, k, B), {B, A, cw}));
    return n == 1 ? blocks[0] : concat(blocks, 2);
  }
  const std::vector<Var> in{all_modules(s), w};
  return reshape(mlp(b, "psi", concat(in, 1), config_.psi_hidden.size() + 1), {B, A, d});
}

Var Agent::q_values(const Bindings& b, const RecurrentState& s, const Var& w) const {
  if (has_sf()) return dot_task(sf(b, s, w), w);
  const std::vector<Var> in{all_modules(s), w};
  return mlp(b, "q", concat(in, 1), config_.q_hidden.size() + 1);
}

Var Agent::cumulants(const Bindings& b, const RecurrentState& s_t, const Var& action,
                     const RecurrentState& s_next) const {
  if (!learns_cumulants()) throw ContractError(kind_name(kind()) + " does not learn cumulants");
  const std::size_t B = s_t.batch();
  if (modular_heads()) {
    const std::size_t n = config_.num_modules;
    std::vector<Var> inputs;
    for (std::size_t k = 0; k < n; ++k) {
      const std::vector<Var> parts{s_t.parts[k], action, s_next.parts[k]};
      inputs.push_back(concat(parts, 1));
    }
    const Var out = mlp(b, "phi", n == 1 ? inputs[0] : concat(inputs, 0), config_.phi_hidden.size() + 1);
    if (n == 1) return out;
    std::vector<Var> blocks;
    for (std::size_t k = 0; k < n; ++k) blocks.push_back(module_rows(out, k, B));
    return concat(blocks, 1);
  }
  const std::vector<Var> in{all_modules(s_t), action, all_modules(s_next)};
  return mlp(b, "phi", concat(in, 1), config_.phi_hidden.size() + 1);
}

std::size_t parameter_count(const ArchConfig& config) { return Agent(config).init_params(0).trainable_size(); }

}  // namespace msfa::arch
