#pragma once

#include <functional>
#include <vector>

#include "msfa/numcore/params.hpp"

namespace msfa {

/// Comparison between reverse-mode and central-difference gradients.
///
/// `rel_error` is ||autodiff - numeric||_2 / max(||autodiff||_2, ||numeric||_2)
/// over all coordinates checked; when both norms are below 1e-12 it is the
/// absolute difference instead.
struct GradCheckReport {
  Real rel_error = 0;
  Real max_abs_error = 0;
  std::size_t coordinates = 0;
};

using InputLoss = std::function<Var(const std::vector<Var>&)>;
using ParamLoss = std::function<Var(const Bindings&)>;

/// Checks d loss / d inputs. `loss` must be deterministic in its inputs.
GradCheckReport check_input_gradients(const InputLoss& loss, const std::vector<Array>& inputs,
                                      Real step = 1e-5);

/// Checks d loss / d params over every trainable coordinate.
GradCheckReport check_param_gradients(const ParamLoss& loss, const ParamSet& params, Real step = 1e-5);

GradCheckReport compare_gradients(const std::vector<Array>& autodiff, const std::vector<Array>& numeric);

}  // namespace msfa
