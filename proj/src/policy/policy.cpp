#include "msfa/policy/policy.hpp"

#include <deque>

namespace msfa::policy {

using arch::Agent;
using arch::RecurrentState;
using envs::Action;
using envs::Direction;
using envs::GridSnapshot;
using envs::Position;

std::size_t epsilon_greedy(std::span<const Real> q, Real epsilon, Rng& rng) {
  if (!(epsilon >= 0 && epsilon <= 1)) throw ContractError("epsilon must lie in [0, 1]");
  const bool explore = rng.uniform() < epsilon;
  if (explore) return static_cast<std::size_t>(rng.index(q.size()));
  return argmax_lowest(q);
}

std::size_t act_train(const Agent& agent, const Bindings& b, const RecurrentState& state, const Array& w,
                      Real epsilon, Rng& rng) {
  const Var q = agent.q_values(b, state, Var::constant(w.reshaped({1, w.size()})));
  return epsilon_greedy(q.value().data(), epsilon, rng);
}

GpiDecision act_gpi(const Agent& agent, const Bindings& b, const RecurrentState& state, const Array& w_test,
                    const std::vector<Array>& bank) {
  if (bank.empty()) throw ContractError("GPI needs a non-empty task bank");
  const std::size_t M = bank.size(), A = agent.config().num_actions, d = agent.config().task_dim;
  if (w_test.size() != d) throw DimensionError("test task dimension mismatch");
  Array z(Shape{M, d});
  for (std::size_t i = 0; i < M; ++i) {
    if (bank[i].size() != d) throw DimensionError("bank task dimension mismatch");
    std::copy(bank[i].data().begin(), bank[i].data().end(), z.raw() + i * d);
  }
  RecurrentState tiled;
  for (const auto& part : state.parts) tiled.parts.push_back(arch::tile_rows(part, M));
  const Array psi = agent.sf(b, tiled, Var::constant(z)).value();  // [M, A, d]

  GpiDecision out;
  out.q = Array(Shape{A, M});
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t i = 0; i < M; ++i) {
      Real v = 0;
      for (std::size_t j = 0; j < d; ++j) v += psi[(i * A + a) * d + j] * w_test[j];
      out.q.at(a, i) = v;
    }
  const auto choice = gpi_argmax(out.q.data(), A, M);
  out.action = choice.action;
  out.source = choice.source;
  return out;
}

std::size_t act_eval(const Agent& agent, const Bindings& b, const RecurrentState& state, const Array& w_test,
                     const std::vector<Array>& bank) {
  if (agent.uses_gpi()) return act_gpi(agent, b, state, w_test, bank).action;
  const Var q = agent.q_values(b, state, Var::constant(w_test.reshaped({1, w_test.size()})));
  return argmax_lowest(q.value().data());
}

namespace {

struct Pose {
  Position pos;
  Direction facing;
};

int pose_index(const GridSnapshot& s, const Pose& p) {
  return (p.pos.y * s.config.width + p.pos.x) * 4 + static_cast<int>(p.facing);
}

Pose apply(const GridSnapshot& s, const Pose& p, int action) {
  switch (action) {
    case 0: return {p.pos, static_cast<Direction>((static_cast<int>(p.facing) + 3) % 4)};
    case 1: return {p.pos, static_cast<Direction>((static_cast<int>(p.facing) + 1) % 4)};
    default: {
      const Position f = envs::ahead(p.pos, p.facing);
      if (s.in_bounds(f) && s.object_at(f) < 0) return {f, p.facing};
      return p;
    }
  }
}

bool faces_target(const GridSnapshot& s, const Pose& p, const Array& w) {
  const Position f = envs::ahead(p.pos, p.facing);
  if (!s.in_bounds(f)) return false;
  const int idx = s.object_at(f);
  return idx >= 0 && w[static_cast<std::size_t>(s.objects[static_cast<std::size_t>(idx)].category)] > 0;
}

// First action of a shortest path to a target-facing pose, or -1.
int bfs(const GridSnapshot& s, const Array& w, const std::vector<bool>& avoid) {
  const Pose start{s.agent, s.facing};
  std::vector<int> first(static_cast<std::size_t>(s.config.width * s.config.height * 4), -2);
  std::deque<Pose> frontier{start};
  first[static_cast<std::size_t>(pose_index(s, start))] = -1;
  while (!frontier.empty()) {
    const Pose p = frontier.front();
    frontier.pop_front();
    const int origin = first[static_cast<std::size_t>(pose_index(s, p))];
    if (faces_target(s, p, w)) return origin < 0 ? static_cast<int>(Action::kPickup) : origin;
    for (int a = 0; a < 3; ++a) {
      const Pose q = apply(s, p, a);
      if (a == 2 && q.pos == p.pos) continue;
      if (avoid[static_cast<std::size_t>(q.pos.y * s.config.width + q.pos.x)] && !(q.pos == start.pos)) continue;
      auto& slot = first[static_cast<std::size_t>(pose_index(s, q))];
      if (slot != -2) continue;
      slot = origin < 0 ? a : origin;
      frontier.push_back(q);
    }
  }
  return -1;
}

}  // namespace

int act_bfs_oracle(const GridSnapshot& s, const Array& w, Rng& rng) {
  if (w.size() != static_cast<std::size_t>(s.config.num_categories)) throw DimensionError("task vector size");
  std::vector<bool> avoid(static_cast<std::size_t>(s.config.width * s.config.height), false);
  std::vector<bool> none = avoid;
  bool any_negative = false;
  for (const auto& o : s.objects) {
    if (w[static_cast<std::size_t>(o.category)] >= 0) continue;
    any_negative = true;
    const Position around[4] = {{o.pos.x + 1, o.pos.y}, {o.pos.x - 1, o.pos.y}, {o.pos.x, o.pos.y + 1}, {o.pos.x, o.pos.y - 1}};
    for (const auto& p : around)
      if (s.in_bounds(p)) avoid[static_cast<std::size_t>(p.y * s.config.width + p.x)] = true;
  }
  int action = bfs(s, w, avoid);
  if (action < 0 && any_negative) action = bfs(s, w, none);
  if (action >= 0) return action;

  std::vector<int> legal{0, 1};
  const Position f = envs::ahead(s.agent, s.facing);
  if (s.in_bounds(f) && s.object_at(f) < 0) legal.push_back(2);
  return legal[rng.index(legal.size())];
}

}  // namespace msfa::policy
