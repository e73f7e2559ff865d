#include <cmath>

#include "doctest.h"
#include "msfa/oracle/dp.hpp"
#include "msfa/policy/selection.hpp"

using namespace msfa;
using namespace msfa::envs;
using namespace msfa::oracle;

namespace {

std::vector<Real> random_w(Rng& rng, std::size_t d) {
  std::vector<Real> w(d);
  for (auto& x : w) x = static_cast<Real>(rng.uniform(-1, 1));
  return w;
}

TabularPolicy random_policy(Rng& rng, std::size_t S, std::size_t A) {
  TabularPolicy pi(S, A);
  for (std::size_t s = 0; s < S; ++s) {
    Real total = 0;
    for (std::size_t a = 0; a < A; ++a) total += (pi(s, a) = static_cast<Real>(rng.uniform()));
    for (std::size_t a = 0; a < A; ++a) pi(s, a) /= total;
    Real row = 0;
    for (std::size_t a = 0; a < A; ++a) row += pi(s, a);
    pi(s, 0) += 1 - row;
  }
  return pi;
}

std::vector<Real> basis(std::size_t i, std::size_t d) {
  std::vector<Real> z(d, 0);
  z[i] = 1;
  return z;
}

}  // namespace

TEST_CASE("gamma = 0 gives the expected immediate cumulant") {
  Rng rng(1);
  RandomMDPOptions o;
  o.discount = 0;
  const auto mdp = random_mdp(rng, o);
  const auto pi = random_policy(rng, o.states, o.actions);
  const auto sf = exact_sf(mdp, pi);
  for (std::size_t s = 0; s < o.states; ++s)
    for (std::size_t a = 0; a < o.actions; ++a)
      for (std::size_t j = 0; j < o.dim; ++j) {
        Real expected = 0;
        for (std::size_t s2 = 0; s2 < o.states; ++s2) expected += mdp.p(s, a, s2) * mdp.phi(s, a, s2)[j];
        CHECK(std::abs(sf.at(s, a)[j] - expected) < 1e-15);
      }
}

TEST_CASE("self-loop with unit cumulant sums the geometric series") {
  TabularMDP mdp(2, 1, 2, 0.5);
  mdp.p(0, 0, 0) = 1;
  mdp.p(1, 0, 0) = 1;
  mdp.phi(0, 0, 0)[0] = 1;
  const std::vector<std::size_t> acts{0, 0};
  const auto sf = exact_sf(mdp, TabularPolicy::deterministic(acts, 1));
  CHECK(std::abs(sf.at(0, 0)[0] - 2) < 1e-12);
  CHECK(sf.at(0, 0)[1] == 0);
  CHECK(std::abs(sf.at(1, 0)[0] - 1) < 1e-12);  // no cumulant on the entry transition
}

TEST_CASE("SF dotted with w matches scalar evaluation of the induced reward") {
  Rng rng(2);
  RandomMDPOptions o;
  o.states = 6;
  o.actions = 3;
  o.dim = 4;
  const auto mdp = random_mdp(rng, o);
  const auto pi = random_policy(rng, 6, 3);
  const auto sf = exact_sf(mdp, pi);
  CHECK(sf.residual < 1e-12);
  CHECK(sf_bellman_residual(mdp, pi, sf) < 1e-12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = random_w(rng, 4);
    const auto q = evaluate_q(mdp, pi, w);
    for (std::size_t s = 0; s < 6; ++s)
      for (std::size_t a = 0; a < 3; ++a) CHECK(std::abs(sf.q(s, a, w) - q[s * 3 + a]) < 1e-10);
  }
}

TEST_CASE("exact SF is linear in the cumulants") {
  Rng rng(3);
  auto mdp = random_mdp(rng, {});
  const auto pi = random_policy(rng, mdp.num_states, mdp.num_actions);
  const auto base = exact_sf(mdp, pi);
  for (Real& f : mdp.cumulants) f *= 2;
  const auto doubled = exact_sf(mdp, pi);
  for (std::size_t i = 0; i < base.psi.size(); ++i) CHECK(doubled.psi[i] == 2 * base.psi[i]);
}

TEST_CASE("non-stochastic rows are rejected") {
  TabularMDP mdp(2, 1, 1, 0.9);
  mdp.p(0, 0, 1) = 0.7;
  mdp.p(1, 0, 1) = 1;
  TabularPolicy pi(2, 1);
  pi(0, 0) = pi(1, 0) = 1;
  CHECK_THROWS_AS(exact_sf(mdp, pi), ContractError);
}

TEST_CASE("value iteration returns a greedy-consistent fixpoint") {
  Rng rng(4);
  const auto mdp = random_mdp(rng, {});
  const auto w = random_w(rng, mdp.feature_dim);
  const auto qstar = optimal_q(mdp, w);
  const auto pi = greedy_policy(qstar, mdp.num_states, mdp.num_actions);
  const auto q = evaluate_q(mdp, pi, w);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(std::abs(q[i] - qstar[i]) < 1e-10);
}

TEST_CASE("GPI with a single base policy is policy improvement") {
  Rng rng(5);
  const auto mdp = random_mdp(rng, {});
  const auto pi = random_policy(rng, mdp.num_states, mdp.num_actions);
  const std::vector<TabularPolicy> bank{pi};
  const auto report = gpi_value_check(mdp, bank, random_w(rng, mdp.feature_dim));
  CHECK(report.ok);
}

TEST_CASE("GPI over orthogonal-task optimal policies dominates on 100 random MDPs") {
  Rng rng(6);
  Real worst = 1;
  for (int trial = 0; trial < 100; ++trial) {
    RandomMDPOptions o;
    o.states = 2 + rng.index(9);
    o.actions = 2 + rng.index(3);
    o.dim = 2;
    o.deterministic = rng.bernoulli(0.3);
    const auto mdp = random_mdp(rng, o);
    std::vector<TabularPolicy> bank;
    for (std::size_t i = 0; i < 2; ++i)
      bank.push_back(greedy_policy(optimal_q(mdp, basis(i, 2)), o.states, o.actions));
    const std::vector<Real> w{1, 1};
    const auto report = gpi_value_check(mdp, bank, w);
    CAPTURE(report.describe());
    CHECK(report.ok);
    worst = std::min(worst, report.min_margin);
  }
  CHECK(worst >= -1e-10);
}

TEST_CASE("GPI action matches the better base policy's greedy action per state") {
  Rng rng(7);
  RandomMDPOptions o;
  o.states = 5;
  o.actions = 3;
  o.dim = 2;
  const auto mdp = random_mdp(rng, o);
  std::vector<ExactSF> sfs;
  std::vector<TabularPolicy> bank;
  for (std::size_t i = 0; i < 2; ++i) {
    bank.push_back(greedy_policy(optimal_q(mdp, basis(i, 2)), 5, 3));
    sfs.push_back(exact_sf(mdp, bank.back()));
  }
  const std::vector<Real> w{1, 1};
  const auto report = gpi_value_check(mdp, bank, w);
  for (std::size_t s = 0; s < 5; ++s) {
    // Brute force: best (a, i) pair by exhaustive enumeration.
    Real best = -1e300;
    std::size_t best_a = 0;
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t i = 0; i < 2; ++i)
        if (sfs[i].q(s, a, w) > best) {
          best = sfs[i].q(s, a, w);
          best_a = a;
        }
    CHECK(report.gpi_policy(s, best_a) == 1);
  }
}

TEST_CASE("GPI margin is zero when the base policy is already optimal for w_test") {
  Rng rng(8);
  const auto mdp = random_mdp(rng, {});
  const auto z = basis(0, mdp.feature_dim);
  const std::vector<TabularPolicy> bank{greedy_policy(optimal_q(mdp, z), mdp.num_states, mdp.num_actions)};
  const auto report = gpi_value_check(mdp, bank, z);
  CHECK(report.ok);
  for (Real m : report.margins) CHECK(std::abs(m) < 1e-10);
}

TEST_CASE("action values split over cumulant blocks") {
  Rng rng(9);
  RandomMDPOptions o;
  o.dim = 4;
  const auto mdp = random_mdp(rng, o);
  const auto pi = random_policy(rng, o.states, o.actions);
  const std::vector<std::vector<std::size_t>> partitions{{4}, {1, 1, 1, 1}, {1, 3}, {2, 2}};
  for (const auto& blocks : partitions) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto report = decomposition_check(mdp, pi, blocks, random_w(rng, 4));
      CAPTURE(report.describe());
      CHECK(report.ok);
    }
  }
  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(decomposition_check(mdp, pi, bad, random_w(rng, 4)), DimensionError);
}

TEST_CASE("GPI selection breaks ties by lowest index") {
  const std::vector<Real> q{1, 2, 2, 0, 2, 1};  // 3 actions x 2 tasks
  const auto c = policy::gpi_argmax(q, 3, 2);
  CHECK(c.action == 0);
  CHECK(c.source == 1);
  const std::vector<Real> flat{0, 0, 0};
  CHECK(policy::argmax_lowest(flat) == 0);
}
