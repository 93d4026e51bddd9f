#pragma once

#include <cstdint>

namespace pyrseg {

// xorshift64* (Vigna 2014): state update with shifts 12/25/27 followed by the
// multiplier 0x2545F4914F6CDD1D. Seeds are expanded through one splitmix64
// round, which maps zero to a nonzero state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 24 bits of mantissa.
  float uniform();
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  // Standard normal via Box-Muller; the second variate is cached.
  float normal();

  static std::uint64_t splitmix64(std::uint64_t x);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  float spare_ = 0.f;
};

// Derives an independent stream seed from a base seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return Rng::splitmix64(base ^ Rng::splitmix64(tag + 0x632BE59BD9B4E019ULL));
}

}  // namespace pyrseg
