#include "msfa/numcore/params.hpp"

#include <cmath>

namespace msfa {

void ParamSet::add(const std::string& path, Array value) {
  if (path.empty()) throw ContractError("ParamSet::add: empty path");
  if (!values_.emplace(path, std::move(value)).second) {
    throw ContractError("ParamSet::add: duplicate parameter path '" + path + "'");
  }
  ++version_;
}

void ParamSet::set(const std::string& path, Array value) {
  values_[path] = std::move(value);
  ++version_;
}

const Array& ParamSet::at(const std::string& path) const {
  auto it = values_.find(path);
  if (it == values_.end()) throw ContractError("unknown parameter path '" + path + "'");
  return it->second;
}

void ParamSet::erase(const std::string& path) {
  values_.erase(path);
  ++version_;
}

std::vector<std::string> ParamSet::trainable_paths() const {
  std::vector<std::string> out;
  for (const auto& [path, _] : values_)
    if (!is_reserved(path)) out.push_back(path);
  return out;
}

std::size_t ParamSet::trainable_size() const {
  std::size_t n = 0;
  for (const auto& [path, value] : values_)
    if (!is_reserved(path)) n += value.size();
  return n;
}

Bindings::Bindings(const ParamSet& params, bool requires_grad) : requires_grad_(requires_grad) {
  for (const auto& [path, value] : params.entries()) {
    if (ParamSet::is_reserved(path)) continue;
    vars_.emplace(path, requires_grad ? Var::leaf(value, true) : Var::constant(value));
  }
}

const Var& Bindings::operator[](const std::string& path) const {
  auto it = vars_.find(path);
  if (it == vars_.end()) throw ContractError("no bound parameter '" + path + "'");
  return it->second;
}

GradMap grad(const Var& loss, const Bindings& bindings) {
  std::vector<Var> wrt;
  std::vector<std::string> names;
  wrt.reserve(bindings.vars().size());
  for (const auto& [path, var] : bindings.vars()) {
    names.push_back(path);
    wrt.push_back(var);
  }
  std::vector<Array> gs = gradients(loss, wrt);
  GradMap out;
  for (std::size_t i = 0; i < names.size(); ++i) out.emplace(names[i], std::move(gs[i]));
  return out;
}

Real global_norm(const GradMap& grads) {
  Real sq = 0;
  for (const auto& [_, g] : grads)
    for (Real v : g.data()) sq += v * v;
  return std::sqrt(sq);
}

AdamResult adam_step(const ParamSet& params, const GradMap& grads, const AdamConfig& config) {
  const auto paths = params.trainable_paths();
  if (grads.size() != paths.size()) {
    throw ContractError("adam_step: gradient keys do not match parameter paths");
  }
  for (const auto& path : paths) {
    auto it = grads.find(path);
    if (it == grads.end()) throw ContractError("adam_step: missing gradient for '" + path + "'");
    if (it->second.shape() != params.at(path).shape()) {
      throw DimensionError("adam_step: gradient shape " + shape_string(it->second.shape()) +
                           " does not match parameter '" + path + "' " +
                           shape_string(params.at(path).shape()));
    }
    if (!it->second.all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter '" + path + "'");
    }
  }

  AdamResult result{params, global_norm(grads), 1};
  if (config.max_grad_norm > 0 && result.grad_norm > config.max_grad_norm) {
    result.clip_scale = config.max_grad_norm / result.grad_norm;
  }

  ParamSet& out = result.params;
  const Real step = (out.contains("_adam/t") ? out.at("_adam/t").item() : Real{0}) + 1;
  out.set("_adam/t", Array::scalar(step));
  const Real bc1 = 1 - std::pow(config.beta1, step);
  const Real bc2 = 1 - std::pow(config.beta2, step);

  for (const auto& path : paths) {
    const Array& g = grads.at(path);
    const std::string mpath = "_adam/m/" + path;
    const std::string vpath = "_adam/v/" + path;
    Array m = out.contains(mpath) ? out.at(mpath) : Array(g.shape(), Real{0});
    Array v = out.contains(vpath) ? out.at(vpath) : Array(g.shape(), Real{0});
    Array p = out.at(path);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real gi = g[i] * result.clip_scale;
      m[i] = config.beta1 * m[i] + (1 - config.beta1) * gi;
      v[i] = config.beta2 * v[i] + (1 - config.beta2) * gi * gi;
      const Real mhat = m[i] / bc1;
      const Real vhat = v[i] / bc2;
      p[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
    out.set(mpath, std::move(m));
    out.set(vpath, std::move(v));
    out.set(path, std::move(p));
  }
  return result;
}

}  // namespace msfa
