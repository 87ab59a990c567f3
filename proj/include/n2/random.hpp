#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

namespace n2 {

/// Seeded generator with platform-independent transforms.
///
/// The engine is std::mt19937_64; uniform and normal variates are derived
/// from raw 64-bit draws here rather than through <random> distributions,
/// whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }
  /// Standard normal via Box-Muller (one variate per call).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with stream identifiers (splitmix64 finalizer), so that
/// e.g. (seed, subject, slice, epoch) each get an independent stream.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

/// Stable 64-bit FNV-1a hash, used to turn identifiers into stream ids.
std::uint64_t hash_string(const std::string& text);

}  // namespace n2
