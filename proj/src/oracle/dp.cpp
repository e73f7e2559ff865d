#include "msfa/oracle/dp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "msfa/policy/selection.hpp"

namespace msfa::oracle {

namespace {

constexpr Real kTolerance = 1e-12;
constexpr std::size_t kMaxIterations = 1'000'000;
constexpr std::size_t kPolishIterations = 200;

void check_policy(const TabularMDP& mdp, const TabularPolicy& pi) {
  if (pi.num_states != mdp.num_states || pi.num_actions != mdp.num_actions) {
    throw DimensionError("policy table does not match MDP size");
  }
  pi.validate();
}

// One backup of vector evaluation: out[s,a] = Σ_s' P (φ* · proj + γ Σ_a' π ψ[s',a']).
// `proj` maps the d cumulant entries to `width` outputs: identity when
// width == d, a dot with w when width == 1.
template <typename Reward>
std::vector<Real> backup(const TabularMDP& mdp, const TabularPolicy& pi, const std::vector<Real>& cur,
                         std::size_t width, Reward reward) {
  const std::size_t S = mdp.num_states, A = mdp.num_actions;
  std::vector<Real> next_v(S * width, 0);
  for (std::size_t s2 = 0; s2 < S; ++s2)
    for (std::size_t a2 = 0; a2 < A; ++a2) {
      const Real p = pi(s2, a2);
      if (p == 0) continue;
      for (std::size_t j = 0; j < width; ++j) next_v[s2 * width + j] += p * cur[(s2 * A + a2) * width + j];
    }
  std::vector<Real> out(S * A * width, 0);
  std::vector<Real> r(width);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t s2 = 0; s2 < S; ++s2) {
        const Real p = mdp.p(s, a, s2);
        if (p == 0) continue;
        reward(s, a, s2, r);
        for (std::size_t j = 0; j < width; ++j)
          out[(s * A + a) * width + j] += p * (r[j] + mdp.discount * next_v[s2 * width + j]);
      }
  return out;
}

Real sup_diff(const std::vector<Real>& a, const std::vector<Real>& b) {
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename Step>
std::vector<Real> iterate_to_fixpoint(std::vector<Real> cur, Step step, Real& residual, std::size_t& iterations) {
  residual = std::numeric_limits<Real>::infinity();
  iterations = 0;
  while (residual >= kTolerance) {
    if (++iterations > kMaxIterations) throw NumericError("policy evaluation did not converge");
    auto next = step(cur);
    residual = sup_diff(next, cur);
    cur = std::move(next);
  }
  for (std::size_t k = 0; k < kPolishIterations && residual > 0; ++k) {
    auto next = step(cur);
    const Real r = sup_diff(next, cur);
    if (r >= residual) break;
    residual = r;
    cur = std::move(next);
    ++iterations;
  }
  return cur;
}

}  // namespace

Real ExactSF::q(std::size_t s, std::size_t a, std::span<const Real> w) const {
  if (w.size() != feature_dim) throw DimensionError("task dimension does not match SF dimension");
  const auto psi_sa = at(s, a);
  Real v = 0;
  for (std::size_t j = 0; j < feature_dim; ++j) v += psi_sa[j] * w[j];
  return v;
}

std::vector<Real> ExactSF::q_table(std::span<const Real> w) const {
  std::vector<Real> out(num_states * num_actions);
  for (std::size_t s = 0; s < num_states; ++s)
    for (std::size_t a = 0; a < num_actions; ++a) out[s * num_actions + a] = q(s, a, w);
  return out;
}

ExactSF exact_sf(const TabularMDP& mdp, const TabularPolicy& pi) {
  mdp.validate();
  check_policy(mdp, pi);
  const std::size_t d = mdp.feature_dim;
  ExactSF sf{mdp.num_states, mdp.num_actions, d, {}, 0, 0};
  auto reward = [&](std::size_t s, std::size_t a, std::size_t s2, std::vector<Real>& r) {
    const auto f = mdp.phi(s, a, s2);
    std::copy(f.begin(), f.end(), r.begin());
  };
  sf.psi = iterate_to_fixpoint(
      std::vector<Real>(mdp.num_states * mdp.num_actions * d, 0),
      [&](const std::vector<Real>& cur) { return backup(mdp, pi, cur, d, reward); }, sf.residual, sf.iterations);
  return sf;
}

Real sf_bellman_residual(const TabularMDP& mdp, const TabularPolicy& pi, const ExactSF& sf) {
  check_policy(mdp, pi);
  auto reward = [&](std::size_t s, std::size_t a, std::size_t s2, std::vector<Real>& r) {
    const auto f = mdp.phi(s, a, s2);
    std::copy(f.begin(), f.end(), r.begin());
  };
  return sup_diff(backup(mdp, pi, sf.psi, mdp.feature_dim, reward), sf.psi);
}

std::vector<Real> evaluate_q(const TabularMDP& mdp, const TabularPolicy& pi, std::span<const Real> w) {
  mdp.validate();
  check_policy(mdp, pi);
  if (w.size() != mdp.feature_dim) throw DimensionError("task dimension does not match cumulant dimension");
  auto reward = [&](std::size_t s, std::size_t a, std::size_t s2, std::vector<Real>& r) {
    const auto f = mdp.phi(s, a, s2);
    Real v = 0;
    for (std::size_t j = 0; j < f.size(); ++j) v += f[j] * w[j];
    r[0] = v;
  };
  Real residual;
  std::size_t iterations;
  return iterate_to_fixpoint(
      std::vector<Real>(mdp.num_states * mdp.num_actions, 0),
      [&](const std::vector<Real>& cur) { return backup(mdp, pi, cur, 1, reward); }, residual, iterations);
}

std::vector<Real> optimal_q(const TabularMDP& mdp, std::span<const Real> w) {
  mdp.validate();
  if (w.size() != mdp.feature_dim) throw DimensionError("task dimension does not match cumulant dimension");
  const std::size_t S = mdp.num_states, A = mdp.num_actions;
  std::vector<Real> expected_r(S * A, 0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t s2 = 0; s2 < S; ++s2) {
        const auto f = mdp.phi(s, a, s2);
        Real v = 0;
        for (std::size_t j = 0; j < f.size(); ++j) v += f[j] * w[j];
        expected_r[s * A + a] += mdp.p(s, a, s2) * v;
      }
  auto step = [&](const std::vector<Real>& cur) {
    std::vector<Real> v(S);
    for (std::size_t s = 0; s < S; ++s)
      v[s] = *std::max_element(cur.begin() + static_cast<std::ptrdiff_t>(s * A),
                               cur.begin() + static_cast<std::ptrdiff_t>((s + 1) * A));
    std::vector<Real> out(S * A);
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t a = 0; a < A; ++a) {
        Real acc = 0;
        for (std::size_t s2 = 0; s2 < S; ++s2) acc += mdp.p(s, a, s2) * v[s2];
        out[s * A + a] = expected_r[s * A + a] + mdp.discount * acc;
      }
    return out;
  };
  Real residual;
  std::size_t iterations;
  return iterate_to_fixpoint(std::vector<Real>(S * A, 0), step, residual, iterations);
}

TabularPolicy greedy_policy(std::span<const Real> q, std::size_t states, std::size_t actions) {
  if (q.size() != states * actions) throw DimensionError("Q table size mismatch");
  TabularPolicy pi(states, actions);
  for (std::size_t s = 0; s < states; ++s) pi(s, policy::argmax_lowest(q.subspan(s * actions, actions))) = 1;
  return pi;
}

std::string GpiReport::describe() const {
  std::ostringstream os;
  os << (ok ? "dominance holds" : "dominance violated") << ", min margin " << min_margin << " at (s=" << worst_state
     << ", a=" << worst_action << ")";
  return os.str();
}

GpiReport gpi_value_check(const TabularMDP& mdp, std::span<const TabularPolicy> base, std::span<const Real> w_test,
                          Real tolerance) {
  if (base.empty()) throw ContractError("GPI check needs at least one base policy");
  const std::size_t S = mdp.num_states, A = mdp.num_actions, M = base.size();
  std::vector<std::vector<Real>> base_q;
  for (const auto& pi : base) base_q.push_back(exact_sf(mdp, pi).q_table(w_test));

  GpiReport report;
  report.gpi_policy = TabularPolicy(S, A);
  std::vector<Real> row(A * M);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t i = 0; i < M; ++i) row[a * M + i] = base_q[i][s * A + a];
    report.gpi_policy(s, policy::gpi_argmax(row, A, M).action) = 1;
  }
  const auto gpi_q = exact_sf(mdp, report.gpi_policy).q_table(w_test);

  report.margins.resize(S * A);
  report.state_margins.assign(S, std::numeric_limits<Real>::infinity());
  report.min_margin = std::numeric_limits<Real>::infinity();
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      Real best = base_q[0][s * A + a];
      for (std::size_t i = 1; i < M; ++i) best = std::max(best, base_q[i][s * A + a]);
      const Real m = gpi_q[s * A + a] - best;
      report.margins[s * A + a] = m;
      report.state_margins[s] = std::min(report.state_margins[s], m);
      if (m < report.min_margin) {
        report.min_margin = m;
        report.worst_state = s;
        report.worst_action = a;
      }
    }
  report.ok = report.min_margin >= -tolerance;
  return report;
}

std::string DecompositionReport::describe() const {
  std::ostringstream os;
  os << (ok ? "identity holds" : "identity violated") << ", block gap " << block_gap << ", scalar gap "
     << scalar_gap;
  return os.str();
}

DecompositionReport decomposition_check(const TabularMDP& mdp, const TabularPolicy& pi,
                                        std::span<const std::size_t> blocks, std::span<const Real> w,
                                        Real block_tolerance, Real scalar_tolerance) {
  std::size_t total = 0;
  for (auto b : blocks) {
    if (b == 0) throw ConfigError("empty cumulant block");
    total += b;
  }
  if (total != mdp.feature_dim || w.size() != mdp.feature_dim) {
    throw DimensionError("block partition does not cover the cumulant dimension");
  }
  const auto sf = exact_sf(mdp, pi);
  const auto scalar = evaluate_q(mdp, pi, w);
  DecompositionReport report;
  for (std::size_t s = 0; s < mdp.num_states; ++s)
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      const Real full = sf.q(s, a, w);
      const auto psi = sf.at(s, a);
      Real summed = 0;
      std::size_t offset = 0;
      for (auto b : blocks) {
        Real block = 0;
        for (std::size_t j = offset; j < offset + b; ++j) block += psi[j] * w[j];
        summed += block;
        offset += b;
      }
      report.block_gap = std::max(report.block_gap, std::abs(full - summed));
      report.scalar_gap = std::max(report.scalar_gap, std::abs(full - scalar[s * mdp.num_actions + a]));
    }
  report.ok = report.block_gap <= block_tolerance && report.scalar_gap <= scalar_tolerance;
  return report;
}

}  // namespace msfa::oracle
