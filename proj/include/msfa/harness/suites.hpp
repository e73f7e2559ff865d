#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msfa/numcore/array.hpp"

namespace msfa::harness {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

/// Finite-difference checks of every differentiable op, the recurrent and
/// attention layers, and the combined loss of each agent kind (cycled over
/// seeds). One result per op or layer plus one for the loss.
std::vector<SuiteResult> gradient_suite(std::size_t seeds = 100, std::uint64_t base_seed = 0,
                                        Real tolerance = 1e-4);

/// GPI dominance over exact base-policy values on random tabular MDPs
/// (at most 10 states, 4 actions, d = 4).
SuiteResult gpi_suite(std::size_t instances = 100, std::uint64_t base_seed = 0, Real tolerance = 1e-10);

/// Q^π(s,a,w) = Σ_k ψ^{π,k}(s,a)ᵀw^(k) over random MDPs, policies,
/// partitions and task vectors.
SuiteResult decomposition_suite(std::size_t draws = 50, std::uint64_t base_seed = 0, Real tolerance = 1e-12);

/// Cross-module gradients of the cumulant and SF blocks are exactly zero
/// for MSFA and nonzero for the entangled ablation.
SuiteResult modularity_suite(std::size_t instances = 20, std::uint64_t base_seed = 0);

/// Padding segments with mask-0 steps leaves every loss term and the full
/// gradient bit-identical, for every agent kind.
SuiteResult masking_suite(std::size_t instances = 7, std::uint64_t base_seed = 0);

std::string format_results(const std::vector<SuiteResult>& results);

}  // namespace msfa::harness
