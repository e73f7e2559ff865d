#include "msfa/harness/suites.hpp"

#include <chrono>
#include <cstdio>
#include <functional>

#include "msfa/arch/agent.hpp"
#include "msfa/arch/layers.hpp"
#include "msfa/envs/gridworld.hpp"
#include "msfa/learn/losses.hpp"
#include "msfa/numcore/gradcheck.hpp"
#include "msfa/oracle/dp.hpp"

namespace msfa::harness {

namespace {

using arch::AgentKind;
using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

Array random_array(Rng& rng, Shape shape, double scale = 1.0) {
  Array a(std::move(shape));
  for (Real& v : a.data()) v = static_cast<Real>(rng.uniform(-scale, scale));
  return a;
}

Array away_from_zero(Rng& rng, Shape shape) {
  Array a(std::move(shape));
  for (Real& v : a.data()) {
    const double mag = rng.uniform(0.05, 1.0);
    v = static_cast<Real>(rng.bernoulli(0.5) ? mag : -mag);
  }
  return a;
}

Array one_hot_rows(std::size_t batch, std::size_t width, Rng& rng) {
  Array a(Shape{batch, width});
  for (std::size_t b = 0; b < batch; ++b) a.at(b, rng.index(width)) = 1;
  return a;
}

// Moves every parameter, biases included, off its initial value.
void jitter(ParamSet& p, Rng& rng, double scale) {
  for (const auto& path : p.trainable_paths()) {
    Array v = p.at(path);
    for (Real& x : v.data()) x += static_cast<Real>(rng.uniform(-scale, scale));
    p.set(path, std::move(v));
  }
}

Var weighted(const Var& x, Rng& rng) { return sum(mul(x, Var::constant(random_array(rng, x.shape())))); }

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

// Random-play episode cut into segments of length T, the last one padded.
std::vector<learn::Segment> random_play_segments(const arch::Agent& agent, const envs::GridConfig& cfg,
                                                 const Array& task, std::size_t T, std::uint64_t seed, Rng& rng) {
  envs::GridWorld env(cfg);
  const std::size_t O = cfg.observation_size(), d = task.size();
  Array obs = env.reset(task, seed);
  std::vector<learn::Segment> out;
  int last = -1;
  while (!env.done()) {
    learn::Segment s;
    std::vector<Array> o{obs}, c;
    s.first_prev_action = last;
    while (s.actions.size() < T && !env.done()) {
      last = static_cast<int>(rng.index(envs::kNumActions));
      const auto step = env.step(last);
      s.actions.push_back(last);
      s.rewards.push_back(step.reward);
      c.push_back(step.cumulant);
      o.push_back(step.observation);
      obs = step.observation;
    }
    const std::size_t n = s.actions.size();
    s.obs = Array(Shape{n + 1, O});
    for (std::size_t t = 0; t <= n; ++t) std::copy_n(o[t].raw(), O, s.obs.raw() + t * O);
    s.cumulants = Array(Shape{n, d});
    for (std::size_t t = 0; t < n; ++t) std::copy_n(c[t].raw(), d, s.cumulants.raw() + t * d);
    s.task = task;
    s.mask.assign(n, 1);
    s.terminal.assign(n, 0);
    if (env.done()) s.terminal.back() = 1;
    for (const auto& p : agent.initial_state(1).parts) s.initial_state.push_back(random_array(rng, p.shape(), 0.5));
    s.validate();
    out.push_back(s.padded(T));
  }
  return out;
}

std::vector<const learn::Segment*> pointers(const std::vector<learn::Segment>& segs) {
  std::vector<const learn::Segment*> out;
  for (const auto& s : segs) out.push_back(&s);
  return out;
}

struct GradCase {
  const char* name;
  std::function<Real(Rng&)> run;  // returns the relative error of one draw
};

Real input_case(const InputLoss& loss, const std::vector<Array>& inputs) {
  return check_input_gradients(loss, inputs).rel_error;
}

std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"matmul", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {3, 5}));
                     return input_case([w](const std::vector<Var>& in) { return sum(mul(matmul(in[0], in[1]), w)); },
                                       {random_array(r, {3, 4}), random_array(r, {4, 5})});
                   }});
  cases.push_back({"linear", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {2, 3}));
                     return input_case(
                         [w](const std::vector<Var>& in) { return sum(mul(linear(in[0], in[1], in[2]), w)); },
                         {random_array(r, {2, 4}), random_array(r, {4, 3}), random_array(r, {3})});
                   }});
  cases.push_back({"add", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {2, 3, 4}));
                     return input_case([w](const std::vector<Var>& in) { return sum(mul(add(in[0], in[1]), w)); },
                                       {random_array(r, {2, 1, 4}), random_array(r, {3, 1})});
                   }});
  cases.push_back({"sub", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {3, 4}));
                     return input_case([w](const std::vector<Var>& in) { return sum(mul(sub(in[0], in[1]), w)); },
                                       {random_array(r, {3, 4}), random_array(r, {4})});
                   }});
  cases.push_back({"mul", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {3, 4}));
                     return input_case([w](const std::vector<Var>& in) { return sum(mul(mul(in[0], in[1]), w)); },
                                       {random_array(r, {3, 4}), random_array(r, {3, 1})});
                   }});
  cases.push_back({"scale_square", [](Rng& r) {
                     return input_case([](const std::vector<Var>& in) { return sum(square(scale(in[0], 1.7))); },
                                       {random_array(r, {6})});
                   }});
  cases.push_back({"tanh", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {5}));
                     return input_case([w](const std::vector<Var>& in) { return sum(mul(tanh(in[0]), w)); },
                                       {random_array(r, {5}, 2.0)});
                   }});
  cases.push_back({"sigmoid", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {5}));
                     return input_case([w](const std::vector<Var>& in) { return sum(mul(sigmoid(in[0]), w)); },
                                       {random_array(r, {5}, 3.0)});
                   }});
  cases.push_back({"relu", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {7}));
                     return input_case([w](const std::vector<Var>& in) { return sum(mul(relu(in[0]), w)); },
                                       {away_from_zero(r, {7})});
                   }});
  cases.push_back({"softmax", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {2, 3, 4}));
                     const std::size_t axis = r.index(3);
                     return input_case(
                         [w, axis](const std::vector<Var>& in) { return sum(mul(softmax(in[0], axis), w)); },
                         {random_array(r, {2, 3, 4}, 2.0)});
                   }});
  cases.push_back({"sum", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {2, 4}));
                     return input_case(
                         [w](const std::vector<Var>& in) { return add(sum(mul(sum(in[0], 1), w)), sum(in[0])); },
                         {random_array(r, {2, 3, 4})});
                   }});
  cases.push_back({"concat_slice_reshape", [](Rng& r) {
                     const Var w = Var::constant(random_array(r, {3, 2}));
                     return input_case(
                         [w](const std::vector<Var>& in) {
                           const std::vector<Var> parts{in[0], in[1]};
                           const Var s = slice(reshape(concat(parts, 1), {2, 3}), 0, 0, 2);
                           return sum(mul(reshape(s, {3, 2}), w));
                         },
                         {random_array(r, {2, 1}), random_array(r, {2, 2})});
                   }});
  cases.push_back({"mlp", [](Rng& r) {
                     ParamSet p;
                     arch::init_mlp(p, r, "m", 4, {5, 3}, 2);
                     jitter(p, r, 0.1);
                     const Var x = Var::constant(random_array(r, {3, 4}));
                     const Var w = Var::constant(random_array(r, {3, 2}));
                     return check_param_gradients(
                                [&](const Bindings& b) { return sum(mul(arch::mlp(b, "m", x, 3), w)); }, p)
                         .rel_error;
                   }});
  cases.push_back({"gru_step", [](Rng& r) {
                     ParamSet p;
                     arch::init_gru(p, r, "g", 3, 4);
                     const Var x = Var::constant(random_array(r, {2, 3}));
                     const Var h = Var::constant(random_array(r, {2, 4}));
                     const Var w = Var::constant(random_array(r, {2, 4}));
                     return check_param_gradients(
                                [&](const Bindings& b) { return sum(mul(arch::gru_step(b, "g", x, h), w)); }, p)
                         .rel_error;
                   }});
  cases.push_back({"lstm_step", [](Rng& r) {
                     ParamSet p;
                     arch::init_lstm(p, r, "l", 3, 4);
                     const Var x = Var::constant(random_array(r, {2, 3}));
                     const Var h = Var::constant(random_array(r, {2, 4}));
                     const Var c = Var::constant(random_array(r, {2, 4}));
                     const Var w1 = Var::constant(random_array(r, {2, 4}));
                     const Var w2 = Var::constant(random_array(r, {2, 4}));
                     return check_param_gradients(
                                [&](const Bindings& b) {
                                  const auto out = arch::lstm_step(b, "l", x, h, c);
                                  return add(sum(mul(out.h, w1)), sum(mul(out.c, w2)));
                                },
                                p)
                         .rel_error;
                   }});
  cases.push_back({"attention", [](Rng& r) {
                     arch::AttentionSpec spec;
                     spec.modules = 3;
                     spec.module_size = 4;
                     spec.num_actions = 3;
                     spec.dim = 4;
                     spec.heads = 2;
                     spec.zero_key = r.bernoulli(0.5);
                     ParamSet p;
                     arch::init_attention(p, r, "a", spec);
                     std::vector<Var> states;
                     for (int k = 0; k < 3; ++k) states.push_back(Var::constant(random_array(r, {2, 4}, 2.0)));
                     const Var prev = Var::constant(one_hot_rows(2, 3, r));
                     const Var w = Var::constant(random_array(r, {6, 4}));
                     return check_param_gradients(
                                [&](const Bindings& b) {
                                  return sum(mul(arch::attend(b, "a", spec, states, prev).messages, w));
                                },
                                p)
                         .rel_error;
                   }});
  return cases;
}

}  // namespace

std::vector<SuiteResult> gradient_suite(std::size_t seeds, std::uint64_t base_seed, Real tolerance) {
  std::vector<SuiteResult> out;
  for (const auto& c : gradient_cases()) {
    const auto t0 = Clock::now();
    Real worst = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(mix_seed(base_seed, 1000 + s));
      worst = std::max(worst, c.run(rng));
    }
    out.push_back({std::string("gradient/") + c.name, worst < tolerance,
                   fmt("worst rel error %.3g", static_cast<double>(worst)), since(t0)});
  }

  const auto t0 = Clock::now();
  const auto env = small_env();
  const auto& kinds = arch::all_kinds();
  Real worst = 0;
  std::string worst_kind;
  for (std::size_t s = 0; s < seeds; ++s) {
    const AgentKind kind = kinds[s % kinds.size()];
    const arch::Agent agent(tiny(kind, env.observation_size()));
    const std::uint64_t seed = mix_seed(base_seed, 5000 + s);
    Rng rng(seed);
    ParamSet p = agent.init_params(seed);
    jitter(p, rng, 0.1);
    const ParamSet q = agent.init_params(seed + 1);
    const Array task = Array::vector({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    auto segs = random_play_segments(agent, env, task, 4, seed, rng);
    if (segs.size() > 3) segs.resize(3);
    const learn::Batch batch = learn::make_batch(pointers(segs), envs::kNumActions);
    const Bindings target(q, false);
    learn::LearnConfig config;
    config.nstep = 1 + rng.index(4);
    const Array frozen = learn::compute_losses(agent, Bindings(p, false), target, batch, config).cumulant_signal;
    const Real err =
        check_param_gradients(
            [&](const Bindings& b) { return learn::compute_losses(agent, b, target, batch, config, &frozen).total; }, p)
            .rel_error;
    if (err >= worst) {
      worst = err;
      worst_kind = arch::kind_name(kind);
    }
  }
  out.push_back({"gradient/combined_loss", worst < tolerance,
                 fmt("worst rel error %.3g", static_cast<double>(worst)) + " (" + worst_kind + ")", since(t0)});
  return out;
}

SuiteResult gpi_suite(std::size_t instances, std::uint64_t base_seed, Real tolerance) {
  const auto t0 = Clock::now();
  Rng rng(mix_seed(base_seed, 7));
  Real worst = 1e300;
  std::string failure;
  for (std::size_t i = 0; i < instances; ++i) {
    envs::RandomMDPOptions o;
    o.states = 2 + rng.index(9);
    o.actions = 2 + rng.index(3);
    o.dim = 1 + rng.index(4);
    o.deterministic = rng.bernoulli(0.3);
    const auto mdp = envs::random_mdp(rng, o);
    std::vector<envs::TabularPolicy> bank;
    for (std::size_t k = 0; k < o.dim; ++k) {
      std::vector<Real> z(o.dim, 0);
      z[k] = 1;
      bank.push_back(oracle::greedy_policy(oracle::optimal_q(mdp, z), o.states, o.actions));
    }
    std::vector<Real> w(o.dim);
    for (auto& x : w) x = static_cast<Real>(rng.uniform(-1, 1));
    const auto report = oracle::gpi_value_check(mdp, bank, w, tolerance);
    worst = std::min(worst, report.min_margin);
    if (!report.ok && failure.empty()) failure = " first failure: " + report.describe();
  }
  return {"gpi_dominance", failure.empty() && worst >= -tolerance,
          std::to_string(instances) + " MDPs, min margin " + fmt("%.3g", static_cast<double>(worst)) + failure,
          since(t0)};
}

SuiteResult decomposition_suite(std::size_t draws, std::uint64_t base_seed, Real tolerance) {
  const auto t0 = Clock::now();
  Rng rng(mix_seed(base_seed, 8));
  Real worst = 0;
  bool ok = true;
  for (std::size_t i = 0; i < draws; ++i) {
    envs::RandomMDPOptions o;
    o.states = 2 + rng.index(9);
    o.actions = 2 + rng.index(3);
    o.dim = 1 + rng.index(4);
    const auto mdp = envs::random_mdp(rng, o);
    envs::TabularPolicy pi(o.states, o.actions);
    for (std::size_t s = 0; s < o.states; ++s) {
      Real total = 0;
      for (std::size_t a = 0; a < o.actions; ++a) total += (pi(s, a) = static_cast<Real>(rng.uniform(0.01, 1)));
      for (std::size_t a = 0; a < o.actions; ++a) pi(s, a) /= total;
      Real row = 0;
      for (std::size_t a = 0; a < o.actions; ++a) row += pi(s, a);
      pi(s, 0) += 1 - row;
    }
    std::vector<std::size_t> blocks;
    for (std::size_t left = o.dim; left > 0;) {
      const std::size_t b = 1 + rng.index(left);
      blocks.push_back(b);
      left -= b;
    }
    std::vector<Real> w(o.dim);
    for (auto& x : w) x = static_cast<Real>(rng.uniform(-1, 1));
    const auto report = oracle::decomposition_check(mdp, pi, blocks, w, tolerance);
    worst = std::max(worst, report.block_gap);
    ok = ok && report.ok;
  }
  return {"modular_decomposition", ok && worst <= tolerance,
          std::to_string(draws) + " draws, max block gap " + fmt("%.3g", static_cast<double>(worst)), since(t0)};
}

SuiteResult modularity_suite(std::size_t instances, std::uint64_t base_seed) {
  const auto t0 = Clock::now();
  Rng rng(mix_seed(base_seed, 9));
  Real msfa_cross = 0, msfa_own = 1e300, entangled_cross = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    for (AgentKind kind : {AgentKind::kMsfa, AgentKind::kMsfaEntangled}) {
      const std::size_t n = 2 + rng.index(3);
      arch::ArchConfig cfg;
      cfg.kind = kind;
      cfg.obs_dim = 7;
      cfg.num_actions = 3;
      cfg.num_modules = n;
      cfg.task_dim = n * (1 + rng.index(2));
      cfg.module_size = 4;
      cfg.projection_dim = 4;
      cfg.heads = 2;
      cfg.encoder = {6};
      cfg.phi_hidden = {5};
      cfg.psi_hidden = {5};
      cfg.q_hidden = {5};
      const arch::Agent agent(cfg);
      ParamSet p = agent.init_params(mix_seed(base_seed, i));
      for (const auto& path : p.trainable_paths()) p.set(path, random_array(rng, p.at(path).shape(), 0.7));
      const Bindings b(p, false);
      const std::size_t B = 3, c = cfg.cumulant_width();
      arch::RecurrentState s_t, s_1;
      for (std::size_t k = 0; k < n; ++k) {
        s_t.parts.push_back(Var::leaf(random_array(rng, {B, cfg.module_size})));
        s_1.parts.push_back(Var::leaf(random_array(rng, {B, cfg.module_size})));
      }
      const Var w = Var::constant(random_array(rng, {B, cfg.task_dim}));
      const Var action = Var::constant(one_hot_rows(B, 3, rng));
      std::vector<Var> wrt;
      for (std::size_t j = 0; j < n; ++j) {
        wrt.push_back(s_t.parts[j]);
        wrt.push_back(s_1.parts[j]);
      }
      for (int head = 0; head < 2; ++head) {
        for (std::size_t k = 0; k < n; ++k) {
          const Var out = head == 0 ? agent.cumulants(b, s_t, action, s_1) : agent.sf(b, s_t, w);
          const Var block = slice(out, out.shape().size() - 1, k * c, (k + 1) * c);
          const auto g = gradients(weighted(block, rng), wrt);
          for (std::size_t j = 0; j < n; ++j) {
            const Real mag = std::max(max_abs_diff(g[2 * j], Array(g[2 * j].shape())),
                                      max_abs_diff(g[2 * j + 1], Array(g[2 * j + 1].shape())));
            if (kind == AgentKind::kMsfa) {
              if (j == k) msfa_own = std::min(msfa_own, mag);
              else msfa_cross = std::max(msfa_cross, mag);
            } else if (j != k) {
              entangled_cross = std::max(entangled_cross, mag);
            }
          }
        }
      }
    }
  }
  const bool ok = msfa_cross == 0 && msfa_own > 0 && entangled_cross > 0;
  return {"modularity_isolation", ok,
          "msfa max cross-gradient " + fmt("%.3g", static_cast<double>(msfa_cross)) + ", min own-gradient " +
              fmt("%.3g", static_cast<double>(msfa_own)) + "; entangled max cross-gradient " +
              fmt("%.3g", static_cast<double>(entangled_cross)),
          since(t0)};
}

SuiteResult masking_suite(std::size_t instances, std::uint64_t base_seed) {
  const auto t0 = Clock::now();
  const auto env = small_env();
  const auto& kinds = arch::all_kinds();
  bool ok = true;
  Real worst = 0;
  std::string failure;
  for (std::size_t i = 0; i < instances; ++i) {
    const AgentKind kind = kinds[i % kinds.size()];
    const arch::Agent agent(tiny(kind, env.observation_size()));
    const std::uint64_t seed = mix_seed(base_seed, 9000 + i);
    Rng rng(seed);
    const ParamSet p = agent.init_params(seed), q = agent.init_params(seed + 1);
    const Array task = Array::vector({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    const std::size_t T = 3 + rng.index(4);
    std::vector<learn::Segment> segs;
    for (std::uint64_t ep = 0; ep < 2; ++ep)
      for (auto& s : random_play_segments(agent, env, task, T, seed + ep, rng)) segs.push_back(s);
    const std::size_t padded_length = T + 1 + rng.index(5);
    std::vector<learn::Segment> padded;
    for (const auto& s : segs) padded.push_back(s.padded(padded_length));
    const Bindings on(p, true), tg(q, false);
    learn::LearnConfig config;
    const auto a = learn::compute_losses(agent, on, tg, learn::make_batch(pointers(segs), envs::kNumActions), config);
    const auto b = learn::compute_losses(agent, on, tg, learn::make_batch(pointers(padded), envs::kNumActions), config);
    const Real gap = std::max({std::abs(a.q.value()[0] - b.q.value()[0]), std::abs(a.psi.value()[0] - b.psi.value()[0]),
                               std::abs(a.phi.value()[0] - b.phi.value()[0])});
    const GradMap ga = grad(a.total, on), gb = grad(b.total, on);
    Real grad_gap = 0;
    for (const auto& [path, g] : ga) grad_gap = std::max(grad_gap, max_abs_diff(g, gb.at(path)));
    worst = std::max({worst, gap, grad_gap});
    if ((gap != 0 || grad_gap != 0) && failure.empty()) failure = " first failure: " + arch::kind_name(kind);
    ok = ok && gap == 0 && grad_gap == 0;
  }
  return {"masking_invariance", ok,
          std::to_string(instances) + " padded batches, max loss/gradient change " +
              fmt("%.3g", static_cast<double>(worst)) + failure,
          since(t0)};
}

std::string format_results(const std::vector<SuiteResult>& results) {
  std::string out;
  for (const auto& r : results) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.1fs)", r.seconds);
    out += (r.passed ? "PASS  " : "FAIL  ") + r.name + "  " + r.detail + buf + "\n";
  }
  return out;
}

}  // namespace msfa::harness
