#pragma once

#include <cstddef>
#include <span>

#include "msfa/numcore/array.hpp"

namespace msfa::policy {

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax_lowest(std::span<const Real> values) {
  if (values.empty()) throw ContractError("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

struct GpiChoice {
  std::size_t action = 0;
  std::size_t source = 0;  // index of the bank task whose SF attains the max
};

/// GPI selection over a row-major [actions][bank] matrix of ψ(s,a,z_i)ᵀw.
/// The action maximises the row maximum; the source is the argmax within
/// that row. Ties resolve to the lowest index in both steps.
inline GpiChoice gpi_argmax(std::span<const Real> q, std::size_t actions, std::size_t bank) {
  if (bank == 0 || actions == 0 || q.size() != actions * bank) throw DimensionError("GPI matrix shape mismatch");
  GpiChoice best;
  Real best_value = 0;
  for (std::size_t a = 0; a < actions; ++a) {
    const std::size_t i = argmax_lowest(q.subspan(a * bank, bank));
    const Real v = q[a * bank + i];
    if (a == 0 || v > best_value) {
      best = {a, i};
      best_value = v;
    }
  }
  return best;
}

}  // namespace msfa::policy
