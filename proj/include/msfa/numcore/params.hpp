#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "msfa/numcore/graph.hpp"

namespace msfa {

/// Named parameter arrays keyed by slash-separated paths.
///
/// Paths starting with '_' are reserved for optimizer state and are never
/// bound into a graph or differentiated. The version counter increments on
/// every mutation.
class ParamSet {
 public:
  static constexpr char kReservedPrefix = '_';

  void add(const std::string& path, Array value);
  void set(const std::string& path, Array value);
  const Array& at(const std::string& path) const;
  bool contains(const std::string& path) const { return values_.count(path) > 0; }
  void erase(const std::string& path);

  /// Trainable (non-reserved) paths in sorted order.
  std::vector<std::string> trainable_paths() const;
  /// Total scalar count over trainable paths.
  std::size_t trainable_size() const;
  const std::map<std::string, Array>& entries() const { return values_; }

  std::uint64_t version() const { return version_; }
  void set_version(std::uint64_t v) { version_ = v; }

  /// Deep immutable copy.
  std::shared_ptr<const ParamSet> snapshot() const { return std::make_shared<const ParamSet>(*this); }

  static bool is_reserved(const std::string& path) { return !path.empty() && path[0] == kReservedPrefix; }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.values_ == b.values_ && a.version_ == b.version_;
  }

 private:
  std::map<std::string, Array> values_;
  std::uint64_t version_ = 0;
};

using GradMap = std::map<std::string, Array>;

/// Graph leaves for every trainable parameter of a ParamSet.
///
/// Values are copied at construction, so later mutation of the source set
/// does not affect graphs built from these bindings.
class Bindings {
 public:
  Bindings(const ParamSet& params, bool requires_grad);

  const Var& operator[](const std::string& path) const;
  bool requires_grad() const { return requires_grad_; }
  const std::map<std::string, Var>& vars() const { return vars_; }

 private:
  std::map<std::string, Var> vars_;
  bool requires_grad_;
};

/// Adjoints of `loss` for every bound parameter; unreachable parameters get
/// explicit zero arrays. Throws ContractError for non-scalar losses.
GradMap grad(const Var& loss, const Bindings& bindings);

/// Global L2 norm over all gradient arrays.
Real global_norm(const GradMap& grads);

struct AdamConfig {
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  Real max_grad_norm = 80;  // <= 0 disables clipping
};

struct AdamResult {
  ParamSet params;
  Real grad_norm = 0;   // before clipping
  Real clip_scale = 1;  // factor applied to the raw gradient
};

/// One Adam update after global-norm clipping. Moments live under
/// "_adam/m/<path>" and "_adam/v/<path>", the step count under "_adam/t".
/// Throws NumericError naming the parameter path if a gradient is not finite.
AdamResult adam_step(const ParamSet& params, const GradMap& grads, const AdamConfig& config);

}  // namespace msfa
