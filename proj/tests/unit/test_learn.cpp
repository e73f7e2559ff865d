#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "msfa/learn/evaluate.hpp"
#include "msfa/learn/trainer.hpp"
#include "msfa/numcore/gradcheck.hpp"
#include "msfa/oracle/dp.hpp"

using namespace msfa;
using namespace msfa::learn;
using arch::AgentKind;

namespace fs = std::filesystem;

namespace {

envs::GridConfig small_env() {
  envs::GridConfig c;
  c.width = 5;
  c.height = 5;
  c.num_categories = 2;
  c.instances = 2;
  c.horizon = 12;
  c.view_size = 3;
  return c;
}

arch::ArchConfig tiny(AgentKind kind, std::size_t obs_dim) {
  arch::ArchConfig c;
  c.kind = kind;
  c.obs_dim = obs_dim;
  c.num_actions = 4;
  c.task_dim = 2;
  c.num_modules = 2;
  c.module_size = 4;
  c.projection_dim = 4;
  c.heads = 2;
  c.lstm_size = 4;
  c.encoder = {6};
  c.phi_hidden = {5};
  c.psi_hidden = {5};
  c.q_hidden = {5};
  return c;
}

Array random_array(Rng& rng, Shape shape, double scale = 1.0) {
  Array a(std::move(shape));
  for (Real& v : a.data()) v = static_cast<Real>(rng.uniform(-scale, scale));
  return a;
}

Segment make_segment(const std::vector<Array>& obs, const std::vector<Array>& cumulants, const std::vector<int>& actions,
                     const std::vector<Real>& rewards, const Array& task, bool terminal, int first_prev,
                     std::vector<Array> initial_state) {
  const std::size_t n = actions.size(), O = obs[0].size(), d = task.size();
  Segment s;
  s.obs = Array(Shape{n + 1, O});
  for (std::size_t t = 0; t <= n; ++t) std::copy_n(obs[t].raw(), O, s.obs.raw() + t * O);
  s.cumulants = Array(Shape{n, d});
  for (std::size_t t = 0; t < n; ++t) std::copy_n(cumulants[t].raw(), d, s.cumulants.raw() + t * d);
  s.task = task;
  s.actions = actions;
  s.rewards = rewards;
  s.mask.assign(n, 1);
  s.terminal.assign(n, 0);
  if (terminal && n > 0) s.terminal.back() = 1;
  s.first_prev_action = first_prev;
  s.initial_state = std::move(initial_state);
  s.validate();
  return s;
}

std::vector<Array> random_initial_state(const arch::Agent& agent, Rng& rng) {
  std::vector<Array> out;
  for (const auto& p : agent.initial_state(1).parts) out.push_back(random_array(rng, p.shape(), 0.5));
  return out;
}

// Random-play episode cut into segments of length T, the last one padded.
std::vector<Segment> episode_segments(const arch::Agent& agent, const envs::GridConfig& cfg, const Array& task,
                                      std::size_t T, std::uint64_t seed, Rng& rng) {
  envs::GridWorld env(cfg);
  Array obs = env.reset(task, seed);
  std::vector<Segment> out;
  int last = -1;
  while (!env.done()) {
    std::vector<Array> o{obs}, c;
    std::vector<int> a;
    std::vector<Real> r;
    const int first_prev = last;
    while (a.size() < T && !env.done()) {
      last = static_cast<int>(rng.index(4));
      const auto step = env.step(last);
      a.push_back(last);
      r.push_back(step.reward);
      c.push_back(step.cumulant);
      o.push_back(step.observation);
      obs = step.observation;
    }
    out.push_back(make_segment(o, c, a, r, task, env.done(), first_prev, random_initial_state(agent, rng)).padded(T));
  }
  return out;
}

std::vector<const Segment*> pointers(const std::vector<Segment>& segs) {
  std::vector<const Segment*> out;
  for (const auto& s : segs) out.push_back(&s);
  return out;
}

Real value(const Var& v) { return v.value().item(); }

bool grads_equal(const GradMap& a, const GradMap& b) { return a == b; }

}  // namespace

TEST_CASE("n-step targets follow the window and terminal rules") {
  const Array signal(Shape{3, 1, 1}, {1, 2, 3});
  const Array boot(Shape{4, 1, 1}, {10, 20, 30, 40});
  const Array none(Shape{3, 1});
  const Array all(Shape{3, 1}, {1, 1, 1});

  const Array open = nstep_targets(signal, boot, all, none, 0.5, 2);
  CHECK(open[0] == 9.5);   // 1 + 0.5·2 + 0.25·30
  CHECK(open[1] == 13.5);  // 2 + 0.5·3 + 0.25·40
  CHECK(open[2] == 23.0);  // window truncated at the segment end: 3 + 0.5·40

  const Array term = nstep_targets(signal, boot, all, Array(Shape{3, 1}, {0, 0, 1}), 0.5, 2);
  CHECK(term[0] == 9.5);
  CHECK(term[1] == 3.5);  // 2 + 0.5·3, nothing past the terminal step
  CHECK(term[2] == 3.0);

  const Array masked = nstep_targets(signal, boot, Array(Shape{3, 1}, {1, 1, 0}), none, 0.5, 2);
  CHECK(masked[0] == 9.5);
  CHECK(masked[1] == 17.0);  // 2 + 0.5·30
  CHECK(masked[2] == 0.0);

  const Array one = nstep_targets(signal, boot, all, none, 0.5, 1);
  CHECK(one[0] == 11.0);
  CHECK_THROWS_AS(nstep_targets(signal, Array(Shape{3, 1, 1}), all, none, 0.5, 1), DimensionError);
}

namespace {

// ψ(s, a) = table[a] regardless of state and task.
ParamSet constant_sf_params(const arch::Agent& agent, const std::vector<std::vector<Real>>& table) {
  ParamSet p = agent.init_params(3);
  const std::string last = "psi/l" + std::to_string(agent.config().psi_hidden.size());
  p.set(last + "/w", Array(p.at(last + "/w").shape()));
  Array bias(p.at(last + "/b").shape());
  const std::size_t d = agent.config().task_dim;
  for (std::size_t a = 0; a < table.size(); ++a)
    for (std::size_t j = 0; j < d; ++j) bias[a * d + j] = table[a][j];
  p.set(last + "/b", bias);
  return p;
}

Batch two_step_batch(const arch::Agent& agent, bool terminal) {
  const std::size_t O = agent.config().obs_dim;
  Rng rng(4);
  const std::vector<Array> obs{random_array(rng, {O}), random_array(rng, {O}), random_array(rng, {O})};
  const std::vector<Array> cum{Array::vector({1, 0}), Array::vector({0, 0})};
  static std::vector<Segment> keep;
  keep = {make_segment(obs, cum, {0, 2}, {1, 0}, Array::vector({1, 2}), terminal, -1, random_initial_state(agent, rng))};
  return make_batch(pointers(keep), 4);
}

}  // namespace

TEST_CASE("Q and SF losses equal hand-computed TD errors on a two-step segment") {
  const arch::Agent agent(tiny(AgentKind::kUsfaOracle, 7));
  // Q(·, a, w=[1,2]) = 1, 2, 1.5, 0 so a' = 1 with ψ = [0, 1].
  const ParamSet p = constant_sf_params(agent, {{1, 0}, {0, 1}, {0.5, 0.5}, {0, 0}});
  const Bindings on(p, true), tg(p, false);
  LearnConfig cfg;
  cfg.discount = 0.5;

  const auto open = compute_losses(agent, on, tg, two_step_batch(agent, false), cfg);
  // t=0: target 1 + 0.25·2 = 1.5 vs Q 1; t=1: target 0.5·2 = 1 vs Q 1.5.
  CHECK(value(open.q) == doctest::Approx(0.25).epsilon(1e-14));
  // t=0: [1,0] + 0.25·[0,1] vs [1,0]; t=1: 0.5·[0,1] vs [0.5,0.5].
  CHECK(value(open.psi) == doctest::Approx(0.15625).epsilon(1e-14));
  CHECK(value(open.phi) == 0);
  CHECK(value(open.total) == doctest::Approx(0.5 * 0.25 + 0.15625).epsilon(1e-14));

  const auto term = compute_losses(agent, on, tg, two_step_batch(agent, true), cfg);
  CHECK(value(term.q) == doctest::Approx(1.125).epsilon(1e-14));  // (0 + 1.5²) / 2
  CHECK(value(term.psi) == doctest::Approx(0.25).epsilon(1e-14));  // (0 + 0.5²) / 2
}

TEST_CASE("zero SFs and zero cumulants give zero SF loss") {
  const arch::Agent agent(tiny(AgentKind::kUsfaOracle, 7));
  const ParamSet p = constant_sf_params(agent, {{0, 0}, {0, 0}, {0, 0}, {0, 0}});
  const Bindings on(p, true), tg(p, false);
  Rng rng(5);
  const std::vector<Array> obs{random_array(rng, {7}), random_array(rng, {7}), random_array(rng, {7})};
  const std::vector<Array> cum{Array::vector({0, 0}), Array::vector({0, 0})};
  const std::vector<Segment> segs{
      make_segment(obs, cum, {1, 3}, {0, 0}, Array::vector({1, -1}), false, 2, random_initial_state(agent, rng))};
  const auto terms = compute_losses(agent, on, tg, make_batch(pointers(segs), 4), LearnConfig{});
  CHECK(value(terms.psi) == 0);
  CHECK(value(terms.q) == 0);
}

TEST_CASE("cumulant loss is the squared reward regression error") {
  const arch::Agent agent(tiny(AgentKind::kUsfaLearned, 7));
  ParamSet p = agent.init_params(6);
  p.set("phi/l1/w", Array(p.at("phi/l1/w").shape()));
  p.set("phi/l1/b", Array::vector({0, 0}));
  Rng rng(7);
  std::vector<Array> obs;
  for (int i = 0; i < 4; ++i) obs.push_back(random_array(rng, {7}));
  const std::vector<Array> cum{Array::vector({1, 0}), Array::vector({0, 0}), Array::vector({1, 0})};
  const std::vector<Segment> segs{
      make_segment(obs, cum, {3, 0, 3}, {1, 0, 1}, Array::vector({1, 0}), false, -1, random_initial_state(agent, rng))};
  const Batch batch = make_batch(pointers(segs), 4);
  {
    const Bindings on(p, true);
    // φ̃ = 0: one unit of loss per rewarding step, averaged over 3 steps.
    CHECK(value(compute_losses(agent, on, on, batch, LearnConfig{}).phi) == doctest::Approx(2.0 / 3).epsilon(1e-15));
  }
  p.set("phi/l1/b", Array::vector({1, 0}));
  const std::vector<Array> rewarding{Array::vector({1, 0}), Array::vector({1, 0}), Array::vector({1, 0})};
  const std::vector<Segment> all_reward{
      make_segment(obs, rewarding, {3, 3, 3}, {1, 1, 1}, Array::vector({1, 0}), false, -1, random_initial_state(agent, rng))};
  const Bindings on(p, true);
  CHECK(value(compute_losses(agent, on, on, make_batch(pointers(all_reward), 4), LearnConfig{}).phi) == 0);
}

TEST_CASE("environment cumulants reproduce the reward exactly") {
  const auto env = small_env();
  const arch::Agent agent(tiny(AgentKind::kUsfaOracle, env.observation_size()));
  Rng rng(8);
  for (std::uint64_t ep = 0; ep < 10; ++ep) {
    const Array task = random_array(rng, {2});
    for (const auto& s : episode_segments(agent, env, task, 5, ep, rng))
      for (std::size_t t = 0; t < s.length(); ++t) {
        const Array phi = Array::vector(std::span<const Real>(s.cumulants.raw() + t * 2, 2));
        CHECK(s.rewards[t] == envs::task_dot(phi, task));
      }
  }
}

TEST_CASE("fully masked segments contribute exactly zero") {
  const auto env = small_env();
  const std::size_t O = env.observation_size();
  for (AgentKind kind : arch::all_kinds()) {
    const arch::Agent agent(tiny(kind, O));
    const ParamSet p = agent.init_params(9), q = agent.init_params(10);
    Rng rng(11);
    Segment s;
    s.obs = random_array(rng, {5, O});
    s.cumulants = Array(Shape{4, 2});
    s.task = Array::vector({1, -1});
    s.actions = {1, 2, 3, 0};
    s.rewards.assign(4, 0);
    s.mask.assign(4, 0);
    s.terminal.assign(4, 0);
    s.initial_state = random_initial_state(agent, rng);
    s.validate();
    const std::vector<Segment> segs{s};
    const Bindings on(p, true), tg(q, false);
    const auto terms = compute_losses(agent, on, tg, make_batch(pointers(segs), 4), LearnConfig{});
    CHECK(value(terms.total) == 0);
    CHECK(global_norm(grad(terms.total, on)) == 0);
  }
}

TEST_CASE("mask-0 padding leaves every loss and gradient bit-identical") {
  const auto env = small_env();
  const std::size_t O = env.observation_size();
  for (AgentKind kind : arch::all_kinds()) {
    CAPTURE(arch::kind_name(kind));
    const arch::Agent agent(tiny(kind, O));
    const ParamSet p = agent.init_params(12), q = agent.init_params(13);
    Rng rng(14);
    std::vector<Segment> segs;
    for (std::uint64_t ep = 0; ep < 2; ++ep)
      for (auto& s : episode_segments(agent, env, Array::vector({1, -0.5}), 5, 100 + ep, rng)) segs.push_back(s);
    std::vector<Segment> padded;
    for (const auto& s : segs) padded.push_back(s.padded(9));

    const Bindings on(p, true), tg(q, false);
    const auto a = compute_losses(agent, on, tg, make_batch(pointers(segs), 4), LearnConfig{});
    const auto b = compute_losses(agent, on, tg, make_batch(pointers(padded), 4), LearnConfig{});
    CHECK(a.valid_steps == b.valid_steps);
    CHECK(value(a.q) == value(b.q));
    CHECK(value(a.psi) == value(b.psi));
    CHECK(value(a.phi) == value(b.phi));
    CHECK(value(a.total) == value(b.total));
    CHECK(value(a.total) > 0);
    CHECK(grads_equal(grad(a.total, on), grad(b.total, on)));
  }
}

TEST_CASE("SF loss sends no gradient into the cumulant head and vice versa") {
  const auto env = small_env();
  for (AgentKind kind : {AgentKind::kMsfa, AgentKind::kMsfaEntangled, AgentKind::kUsfaLearned}) {
    CAPTURE(arch::kind_name(kind));
    const arch::Agent agent(tiny(kind, env.observation_size()));
    const ParamSet p = agent.init_params(15), q = agent.init_params(16);
    Rng rng(17);
    const auto segs = episode_segments(agent, env, Array::vector({1, 1}), 6, 3, rng);
    const Bindings on(p, true), tg(q, false);
    const Batch batch = make_batch(pointers(segs), 4);

    const auto psi_grads = grad(compute_losses(agent, on, tg, batch, LearnConfig{}).psi, on);
    const auto phi_grads = grad(compute_losses(agent, on, tg, batch, LearnConfig{}).phi, on);
    Real psi_on_phi = 0, psi_on_psi = 0, phi_on_psi = 0, phi_on_phi = 0;
    for (const auto& [path, g] : psi_grads) {
      Real n = 0;
      for (Real v : g.data()) n += v * v;
      if (path.rfind("phi/", 0) == 0) psi_on_phi += n;
      if (path.rfind("psi/", 0) == 0) psi_on_psi += n;
    }
    for (const auto& [path, g] : phi_grads) {
      Real n = 0;
      for (Real v : g.data()) n += v * v;
      if (path.rfind("psi/", 0) == 0) phi_on_psi += n;
      if (path.rfind("phi/", 0) == 0) phi_on_phi += n;
    }
    CHECK(psi_on_phi == 0);
    CHECK(phi_on_psi == 0);
    CHECK(psi_on_psi > 0);
    CHECK(phi_on_phi > 0);
  }
}

TEST_CASE("UVFA loss with zero SF weights is plain n-step Q-learning") {
  const auto env = small_env();
  const std::size_t O = env.observation_size(), A = 4;
  const arch::Agent agent(tiny(AgentKind::kUvfa, O));
  const ParamSet p = agent.init_params(18), q = agent.init_params(19);
  Rng rng(20);
  std::vector<Segment> segs;
  for (std::uint64_t ep = 0; ep < 2; ++ep)
    for (auto& s : episode_segments(agent, env, Array::vector({1, -1}), 5, 200 + ep, rng)) segs.push_back(s);
  LearnConfig cfg;
  cfg.psi_weight = 0;
  cfg.phi_weight = 0;
  cfg.discount = 0.9;
  cfg.nstep = 3;
  const Bindings on(p, true), tg(q, false);
  const auto terms = compute_losses(agent, on, tg, make_batch(pointers(segs), A), cfg);
  CHECK(value(terms.psi) == 0);
  CHECK(value(terms.phi) == 0);
  CHECK(value(terms.total) == 0.5 * value(terms.q));

  // Reference: step the recurrence one observation at a time and apply the
  // n-step Q-learning target directly.
  const Bindings on_c(p, false);
  Real total = 0;
  std::size_t count = 0;
  for (const auto& s : segs) {
    const std::size_t valid = s.valid_steps();
    const Var w = Var::constant(s.task.reshaped({1, 2}));
    std::vector<std::vector<Real>> q_on, q_tg;
    arch::RecurrentState so, st;
    for (const auto& part : s.initial_state) {
      so.parts.push_back(Var::constant(part));
      st.parts.push_back(Var::constant(part));
    }
    for (std::size_t t = 0; t <= s.length(); ++t) {
      Array prev(Shape{1, A});
      const int pa = t == 0 ? s.first_prev_action : s.actions[t - 1];
      if (pa >= 0 && (t == 0 || s.mask[t - 1] == 1)) prev[static_cast<std::size_t>(pa)] = 1;
      const Var x = Var::constant(Array::vector(std::span<const Real>(s.obs.raw() + t * O, O)).reshaped({1, O}));
      so = agent.observe(on_c, x, Var::constant(prev), so);
      st = agent.observe(tg, x, Var::constant(prev), st);
      const Array a1 = agent.q_values(on_c, so, w).value(), a2 = agent.q_values(tg, st, w).value();
      q_on.emplace_back(a1.data().begin(), a1.data().end());
      q_tg.emplace_back(a2.data().begin(), a2.data().end());
    }
    const bool ends = valid > 0 && s.terminal[valid - 1] == 1;
    for (std::size_t t = 0; t < valid; ++t) {
      const std::size_t k = std::min<std::size_t>(3, valid - t);
      Real target = 0, g = 1;
      for (std::size_t i = 0; i < k; ++i, g *= 0.9) target += g * s.rewards[t + i];
      if (!(ends && t + k == valid)) target += g * *std::max_element(q_tg[t + k].begin(), q_tg[t + k].end());
      const Real err = q_on[t][static_cast<std::size_t>(s.actions[t])] - target;
      total += err * err;
      ++count;
    }
  }
  CHECK(value(terms.q) == doctest::Approx(total / static_cast<Real>(count)).epsilon(1e-12));
}

namespace {

// Solves H X = Y for square H by Gaussian elimination with partial pivoting.
std::vector<Real> solve(std::vector<Real> h, std::vector<Real> y, std::size_t n, std::size_t cols) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(h[r * n + c]) > std::abs(h[piv * n + c])) piv = r;
    for (std::size_t j = 0; j < n; ++j) std::swap(h[c * n + j], h[piv * n + j]);
    for (std::size_t j = 0; j < cols; ++j) std::swap(y[c * cols + j], y[piv * cols + j]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const Real f = h[r * n + c] / h[c * n + c];
      for (std::size_t j = 0; j < n; ++j) h[r * n + j] -= f * h[c * n + j];
      for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] -= f * y[c * cols + j];
    }
  }
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] /= h[r * n + r];
  return y;
}

}  // namespace

TEST_CASE("Q loss vanishes when the SF head reproduces the DP solution") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    envs::RandomMDPOptions o;
    o.states = 5;
    o.actions = 3;
    o.dim = 2;
    o.discount = 0.9;
    o.deterministic = true;
    const auto mdp = envs::random_mdp(rng, o);
    const std::vector<Real> wv{static_cast<Real>(rng.uniform(-1, 1)), static_cast<Real>(rng.uniform(-1, 1))};
    const Array w = Array::vector(wv);
    const auto pistar = oracle::greedy_policy(oracle::optimal_q(mdp, wv), o.states, o.actions);
    const auto sf = oracle::exact_sf(mdp, pistar);

    // One-hot observations; the LSTM forgets everything but the current state.
    arch::ArchConfig c = tiny(AgentKind::kUsfaOracle, o.states);
    c.num_actions = o.actions;
    c.lstm_size = 6;
    c.encoder = {o.states};
    c.psi_hidden = {o.states};
    const arch::Agent agent(c);
    ParamSet p = agent.init_params(22 + static_cast<std::uint64_t>(trial));
    Array eye(Shape{o.states, o.states});
    for (std::size_t i = 0; i < o.states; ++i) eye.at(i, i) = 1;
    p.set("enc/l0/w", eye);
    p.set("core/lstm/h/w", Array(p.at("core/lstm/h/w").shape()));
    Array xw = p.at("core/lstm/x/w"), bias = p.at("core/lstm/b");
    const std::size_t m = c.lstm_size;
    for (std::size_t r = 0; r < o.states; ++r)
      for (std::size_t j = m; j < 2 * m; ++j) xw.at(r, j) = 0;
    for (std::size_t j = m; j < 2 * m; ++j) bias[j] = -1000;
    p.set("core/lstm/x/w", xw);
    p.set("core/lstm/b", bias);
    p.set("psi/l0/b", Array(Shape{o.states}, 50));

    // Fit the output layer so that ψ(s, ·) equals the DP table exactly.
    const std::size_t S = o.states, out_w = o.actions * 2;
    std::vector<Real> H(S * S), Y(S * out_w);
    {
      const Bindings b(p, false);
      for (std::size_t s = 0; s < S; ++s) {
        Array x(Shape{1, S});
        x[s] = 1;
        const auto st = agent.observe(b, Var::constant(x), Var::constant(Array(Shape{1, o.actions})),
                                      agent.initial_state(1));
        const std::vector<Var> in{st.parts[0], Var::constant(w.reshaped({1, 2}))};
        const Array hidden = relu(linear(concat(in, 1), b["psi/l0/w"], b["psi/l0/b"])).value();
        for (std::size_t j = 0; j < S; ++j) H[s * S + j] = hidden[j];
        for (std::size_t a = 0; a < o.actions; ++a)
          for (std::size_t j = 0; j < 2; ++j) Y[s * out_w + a * 2 + j] = sf.at(s, a)[j];
      }
    }
    p.set("psi/l1/w", Array(Shape{S, out_w}, solve(H, Y, S, out_w)));
    p.set("psi/l1/b", Array(Shape{out_w}));

    // A random first action, then the optimal policy: the n-step tail is
    // on-policy, so every target is a fixed point of the DP solution.
    std::vector<Segment> segs;
    for (int b = 0; b < 3; ++b) {
      std::size_t s = rng.index(S);
      std::vector<Array> obs, cum;
      std::vector<int> acts;
      std::vector<Real> rew;
      auto onehot = [&](std::size_t i) {
        Array x(Shape{S});
        x[i] = 1;
        return x;
      };
      obs.push_back(onehot(s));
      for (int t = 0; t < 6; ++t) {
        std::size_t a = rng.index(o.actions);
        if (t > 0)
          for (std::size_t g = 0; g < o.actions; ++g)
            if (pistar(s, g) == 1) a = g;
        std::size_t next = 0;
        for (std::size_t s2 = 0; s2 < S; ++s2)
          if (mdp.p(s, a, s2) == 1) next = s2;
        const auto phi = mdp.phi(s, a, next);
        cum.push_back(Array::vector(phi));
        rew.push_back(phi[0] * wv[0] + phi[1] * wv[1]);
        acts.push_back(static_cast<int>(a));
        obs.push_back(onehot(next));
        s = next;
      }
      segs.push_back(make_segment(obs, cum, acts, rew, w, false, -1, random_initial_state(agent, rng)));
    }
    LearnConfig cfg;
    cfg.discount = o.discount;
    const Bindings on(p, true), tg(p, false);
    const auto terms = compute_losses(agent, on, tg, make_batch(pointers(segs), o.actions), cfg);
    CHECK(value(terms.q) < 1e-8);
  }
}

TEST_CASE("target sync makes online and target outputs bit-identical") {
  const auto env = small_env();
  const arch::Agent agent(tiny(AgentKind::kMsfa, env.observation_size()));
  ParamSet online = agent.init_params(23);
  ParamSet target = online;
  Rng rng(24);
  const auto segs = episode_segments(agent, env, Array::vector({1, 0}), 6, 4, rng);
  const Batch batch = make_batch(pointers(segs), 4);
  {
    const Bindings on(online, true), tg(target, false);
    const auto terms = compute_losses(agent, on, tg, batch, LearnConfig{});
    online = adam_step(online, grad(terms.total, on), AdamConfig{}).params;
  }
  auto outputs = [&](const ParamSet& p) {
    const Bindings b(p, false);
    arch::RecurrentState s0;
    for (const auto& part : batch.initial_state) s0.parts.push_back(Var::constant(part));
    const auto states = agent.unroll(b, batch.obs, batch.prev_actions, s0);
    return agent.sf(b, states.back(), Var::constant(batch.tasks)).value();
  };
  CHECK_FALSE(outputs(online) == outputs(target));
  sync_target(online, target);
  CHECK(outputs(online) == outputs(target));
  CHECK_FALSE(target.contains("_adam/t"));
}

TEST_CASE("combined loss passes finite differences with frozen cumulant targets") {
  const auto env = small_env();
  for (AgentKind kind : arch::all_kinds()) {
    CAPTURE(arch::kind_name(kind));
    const arch::Agent agent(tiny(kind, env.observation_size()));
    const ParamSet p = agent.init_params(25), q = agent.init_params(26);
    Rng rng(27);
    std::vector<Segment> segs = episode_segments(agent, env, Array::vector({1, -1}), 4, 5, rng);
    segs.resize(2);
    const Batch batch = make_batch(pointers(segs), 4);
    const Bindings tg(q, false);
    const Array frozen = compute_losses(agent, Bindings(p, false), tg, batch, LearnConfig{}).cumulant_signal;
    const auto report = check_param_gradients(
        [&](const Bindings& b) { return compute_losses(agent, b, tg, batch, LearnConfig{}, &frozen).total; }, p);
    CHECK(report.rel_error < 1e-4);
  }
}

TEST_CASE("replay buffer evicts FIFO and samples distinct segments") {
  const auto env = small_env();
  const arch::Agent agent(tiny(AgentKind::kMsfa, env.observation_size()));
  Rng rng(28);
  ReplayBuffer replay(3);
  std::vector<Segment> all;
  for (std::uint64_t ep = 0; all.size() < 5; ++ep)
    for (auto& s : episode_segments(agent, env, Array::vector({1, 0}), 6, ep, rng)) all.push_back(s);
  for (std::size_t i = 0; i < 5; ++i) {
    all[i].first_prev_action = static_cast<int>(i % 4);
    replay.push(all[i]);
  }
  CHECK(replay.size() == 3);
  CHECK(replay.items().front().first_prev_action == 2);
  CHECK_THROWS_AS(replay.sample(4, rng), ContractError);
  for (int i = 0; i < 20; ++i) {
    const auto pick = replay.sample(3, rng);
    CHECK(pick[0] != pick[1]);
    CHECK(pick[1] != pick[2]);
    CHECK(pick[0] != pick[2]);
  }
  CHECK_THROWS_AS(ReplayBuffer(0), ConfigError);
  Segment bad = all[0];
  bad.mask[0] = 0;
  bad.mask[1] = 1;
  CHECK_THROWS_AS(replay.push(bad), ContractError);
}

TEST_CASE("epsilon decays linearly over the configured fraction") {
  TrainConfig c;
  c.total_steps = 1000;
  CHECK(epsilon_at(c, 0) == 1.0);
  CHECK(epsilon_at(c, 100) == doctest::Approx(0.55));
  CHECK(epsilon_at(c, 200) == doctest::Approx(0.1));
  CHECK(epsilon_at(c, 900) == doctest::Approx(0.1));
}

TEST_CASE("metric rows round-trip through CSV and carry every column in JSONL") {
  MetricRow r;
  r.step = 40;
  r.kind = "msfa";
  r.seed = 3;
  r.loss_q = 0.25;
  r.epsilon = 0.5;
  r.eval_task = std::vector<Real>{1, -0.5};
  r.eval_return = 2.5;
  const std::string csv = to_csv(r);
  CHECK(csv == "40,0,msfa,3,0.25,,,,0.5,,1;-0.5,2.5,\n");
  const std::string j = to_jsonl(r);
  for (const auto& col : metric_columns()) CHECK(j.find("\"" + col + "\"") != std::string::npos);
  CHECK(j.find("\"eval_task\":[1.0,-0.5]") != std::string::npos);

  const fs::path dir = fs::temp_directory_path() / "msfa_test_metrics";
  fs::remove_all(dir);
  MetricsWriter w(dir / "m.csv", dir / "m.jsonl");
  w.start();
  w.write(r);
  w.flush();
  const auto rows = read_metrics_csv(dir / "m.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].step == 40);
  CHECK(*rows[0].eval_task == std::vector<Real>{1, -0.5});
  CHECK_FALSE(rows[0].loss_psi.has_value());
  fs::remove_all(dir);
}

namespace {

TrainConfig tiny_training(AgentKind kind) {
  TrainConfig c;
  c.env = small_env();
  c.arch = tiny(kind, c.env.observation_size());
  c.train_tasks = {Array::vector({1, 0}), Array::vector({0, 1})};
  c.eval_tasks = {Array::vector({1, 1})};
  c.seed = 7;
  c.total_steps = 240;
  c.trace_length = 6;
  c.batch_size = 4;
  c.min_replay = 4;
  c.replay_capacity = 40;
  c.target_period = 5;
  c.log_every = 24;
  c.eval_every = 120;
  c.eval_episodes = 2;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

TrainOutputs outputs_in(const fs::path& dir) {
  TrainOutputs o;
  o.metrics_csv = dir / "metrics.csv";
  o.metrics_jsonl = dir / "metrics.jsonl";
  return o;
}

}  // namespace

TEST_CASE("training is deterministic and resumes bit-identically") {
  const fs::path root = fs::temp_directory_path() / "msfa_test_train";
  fs::remove_all(root);
  const TrainConfig cfg = tiny_training(AgentKind::kMsfa);

  const auto a = train(cfg, outputs_in(root / "a"));
  const auto b = train(cfg, outputs_in(root / "b"));
  CHECK(a.finished);
  CHECK(a.env_steps == 240);
  CHECK(a.learner_steps > 10);
  CHECK(a.rows.size() == 12);  // 10 training rows + 2 evaluation rows
  CHECK(slurp(root / "a" / "metrics.csv") == slurp(root / "b" / "metrics.csv"));
  CHECK(slurp(root / "a" / "metrics.jsonl") == slurp(root / "b" / "metrics.jsonl"));
  CHECK(a.params == b.params);

  TrainOutputs first = outputs_in(root / "c");
  first.checkpoint_dir = root / "c" / "ckpt";
  first.stop_after_steps = 100;
  const auto part = train(cfg, first);
  CHECK_FALSE(part.finished);
  CHECK(part.env_steps >= 100);
  TrainOutputs second = first;
  second.stop_after_steps = 0;
  second.resume = true;
  const auto rest = train(cfg, second);
  CHECK(rest.finished);
  CHECK(slurp(root / "a" / "metrics.csv") == slurp(root / "c" / "metrics.csv"));
  CHECK(slurp(root / "a" / "metrics.jsonl") == slurp(root / "c" / "metrics.jsonl"));
  CHECK(a.params.entries() == rest.params.entries());
  fs::remove_all(root);
}

TEST_CASE("zero-step budget writes only the header") {
  const fs::path root = fs::temp_directory_path() / "msfa_test_zero";
  fs::remove_all(root);
  TrainConfig cfg = tiny_training(AgentKind::kUvfa);
  cfg.total_steps = 0;
  const auto r = train(cfg, outputs_in(root));
  CHECK(r.finished);
  CHECK(r.rows.empty());
  CHECK(slurp(root / "metrics.csv") == csv_header());
  CHECK(slurp(root / "metrics.jsonl").empty());
  fs::remove_all(root);
}

TEST_CASE("every agent kind trains through the same loop") {
  for (AgentKind kind : arch::all_kinds()) {
    CAPTURE(arch::kind_name(kind));
    TrainConfig cfg = tiny_training(kind);
    cfg.total_steps = 120;
    const auto r = train(cfg);
    CHECK(r.finished);
    CHECK(r.learner_steps > 0);
    for (const auto& row : r.rows) {
      if (row.eval_return) {
        CHECK(std::isfinite(*row.eval_return));
        CHECK(row.reward_pred_err.has_value() == arch::Agent(cfg.arch).has_sf());
      }
      if (row.loss_q) CHECK(std::isfinite(*row.loss_q));
    }
  }
}

TEST_CASE("a diverging run aborts with a numeric error") {
  const fs::path root = fs::temp_directory_path() / "msfa_test_nan";
  fs::remove_all(root);
  TrainConfig cfg = tiny_training(AgentKind::kMsfa);
  cfg.adam.lr = 1e300;
  cfg.adam.max_grad_norm = 0;
  TrainOutputs out = outputs_in(root);
  bool threw = false;
  try {
    train(cfg, out);
  } catch (const NumericError& e) {
    threw = true;
    const std::string msg = e.what();
    if (msg.find("dumped to ") != std::string::npos) {
      CHECK(fs::exists(msg.substr(msg.find("dumped to ") + 10)));
    }
  }
  CHECK(threw);
  fs::remove_all(root);
}

TEST_CASE("configuration errors are reported") {
  TrainConfig cfg = tiny_training(AgentKind::kMsfa);
  cfg.arch.obs_dim += 1;
  CHECK_THROWS_AS(train(cfg), ConfigError);
  cfg = tiny_training(AgentKind::kMsfa);
  cfg.train_tasks = {Array::vector({1, 0, 0})};
  CHECK_THROWS_AS(train(cfg), ConfigError);
  cfg = tiny_training(AgentKind::kMsfa);
  cfg.learn.discount = 1.0;
  CHECK_THROWS_AS(train(cfg), ConfigError);
}
