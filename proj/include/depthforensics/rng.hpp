#pragma once

#include <cstdint>
#include <random>

namespace dfx {

// Deterministic generator whose draws do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi);  // inclusive
  double normal();
  double trunc_normal(double std);  // clipped to +-2 std by rejection

  // Independent child stream, e.g. one per module or per sample.
  Rng fork(std::uint64_t tag) const;

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

// Stateless seed mixing (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

inline Rng make_stream(std::uint64_t seed, std::uint64_t tag) { return Rng(mix_seed(seed, tag)); }

}  // namespace dfx
