#include "msfa/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace msfa {

GradCheckReport compare_gradients(const std::vector<Array>& autodiff, const std::vector<Array>& numeric) {
  if (autodiff.size() != numeric.size()) throw ContractError("compare_gradients: size mismatch");
  GradCheckReport report;
  Real diff_sq = 0, a_sq = 0, n_sq = 0;
  for (std::size_t i = 0; i < autodiff.size(); ++i) {
    const Array& a = autodiff[i];
    const Array& n = numeric[i];
    if (a.shape() != n.shape()) throw DimensionError("compare_gradients: shape mismatch");
    for (std::size_t j = 0; j < a.size(); ++j) {
      const Real d = a[j] - n[j];
      diff_sq += d * d;
      a_sq += a[j] * a[j];
      n_sq += n[j] * n[j];
      report.max_abs_error = std::max(report.max_abs_error, std::abs(d));
    }
    report.coordinates += a.size();
  }
  const Real denom = std::max(std::sqrt(a_sq), std::sqrt(n_sq));
  report.rel_error = denom < 1e-12 ? std::sqrt(diff_sq) : std::sqrt(diff_sq) / denom;
  return report;
}

GradCheckReport check_input_gradients(const InputLoss& loss, const std::vector<Array>& inputs, Real step) {
  std::vector<Var> leaves;
  for (const auto& x : inputs) leaves.push_back(Var::leaf(x, true));
  const std::vector<Array> analytic = gradients(loss(leaves), leaves);

  std::vector<Array> numeric;
  std::vector<Array> probe = inputs;
  auto eval = [&]() {
    std::vector<Var> consts;
    for (const auto& x : probe) consts.push_back(Var::constant(x));
    return loss(consts).value().item();
  };
  for (std::size_t i = 0; i < probe.size(); ++i) {
    Array g(probe[i].shape());
    for (std::size_t j = 0; j < probe[i].size(); ++j) {
      const Real orig = probe[i][j];
      probe[i][j] = orig + step;
      const Real up = eval();
      probe[i][j] = orig - step;
      const Real down = eval();
      probe[i][j] = orig;
      g[j] = (up - down) / (2 * step);
    }
    numeric.push_back(std::move(g));
  }
  return compare_gradients(analytic, numeric);
}

GradCheckReport check_param_gradients(const ParamLoss& loss, const ParamSet& params, Real step) {
  const Bindings bound(params, true);
  const GradMap analytic_map = grad(loss(bound), bound);

  std::vector<Array> analytic, numeric;
  ParamSet probe = params;
  for (const auto& path : params.trainable_paths()) {
    analytic.push_back(analytic_map.at(path));
    Array value = params.at(path);
    Array g(value.shape());
    for (std::size_t j = 0; j < value.size(); ++j) {
      const Real orig = value[j];
      value[j] = orig + step;
      probe.set(path, value);
      const Real up = loss(Bindings(probe, false)).value().item();
      value[j] = orig - step;
      probe.set(path, value);
      const Real down = loss(Bindings(probe, false)).value().item();
      value[j] = orig;
      probe.set(path, value);
      g[j] = (up - down) / (2 * step);
    }
    numeric.push_back(std::move(g));
  }
  return compare_gradients(analytic, numeric);
}

}  // namespace msfa
