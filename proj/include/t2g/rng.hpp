#pragma once

#include <cstdint>
#include <random>

namespace t2g {

// Seeded generator owned by the numeric core. All stochastic code draws from
// one of these so runs are bitwise reproducible. The distribution transforms
// are implemented here instead of <random>'s, whose outputs vary across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller with a cached spare.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // [0, n), n > 0
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  // Independent stream for a sub-task; same (seed, salt) always yields the
  // same stream.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace t2g
