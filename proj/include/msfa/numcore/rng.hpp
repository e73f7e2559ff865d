#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace msfa {

/// Seeded generator with platform-independent derived draws.
///
/// std::mt19937_64 is fully specified by the standard; the distribution
/// helpers here are written out so that sequences do not depend on the
/// standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t index(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed from (seed, stream) via splitmix64.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace msfa
