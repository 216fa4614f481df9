#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>

namespace needle {

// 64-bit finalizer used as the core mixing step of the counter-based
// generator and of the keyed PRFs below.
constexpr uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stateless keyed PRF: a pure function of (key, a, b). Used for hash-style
// membership tests where the same query must give the same answer.
constexpr uint64_t prf(uint64_t key, uint64_t a, uint64_t b = 0) {
  uint64_t h = mix64(key ^ 0x2545f4914f6cdd1dULL);
  h = mix64(h ^ a);
  h = mix64(h ^ (b + 0x9e3779b97f4a7c15ULL));
  return h;
}

// Map a 64-bit word to a double in [0, 1).
constexpr double to_unit(uint64_t w) {
  return static_cast<double>(w >> 11) * 0x1.0p-53;
}

// Source of randomness behind stream generators and randomized runs. Two
// implementations exist: CounterRng (production) and the exhaustive
// enumeration source in enumerate.hpp, which makes the exact distribution
// of any generator computable at toy scale.
class RandomSource {
 public:
  virtual ~RandomSource() = default;

  // Uniform integer in [0, bound). bound >= 1.
  virtual uint64_t uniform(uint64_t bound) = 0;

  // True with probability p.
  virtual bool bernoulli(double p) = 0;

  // Uniform double in [0,1). Not supported by enumerating sources.
  virtual double unit() = 0;
};

// Counter-based splittable generator: every output word is a pure function
// of (master seed, stream id, counter), so independent streams can be drawn
// from any position on any thread without shared state.
class CounterRng final : public RandomSource {
 public:
  CounterRng(uint64_t seed, uint64_t stream_id = 0)
      : key_(mix64(mix64(seed) ^ (stream_id * 0xd6e8feb86659fd93ULL))), ctr_(0) {}

  uint64_t next_word() { return mix64(key_ ^ (0x9e3779b97f4a7c15ULL * ++ctr_)); }

  uint64_t uniform(uint64_t bound) override {
    if (bound == 0) throw std::invalid_argument("uniform: bound must be >= 1");
    // Debiased multiply-shift; rejection keeps the draw exactly uniform.
    uint64_t x = next_word();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < bound) {
      uint64_t thresh = (0 - bound) % bound;
      while (lo < thresh) {
        x = next_word();
        m = static_cast<__uint128_t>(x) * bound;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  bool bernoulli(double p) override {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return to_unit(next_word()) < p;
  }

  double unit() override { return to_unit(next_word()); }

  // Derive an independent child generator; child streams never collide with
  // the parent or with other tags.
  CounterRng split(uint64_t tag) const { return CounterRng(key_, mix64(tag) | 1); }

 private:
  uint64_t key_;
  uint64_t ctr_;
};

// Poisson sample by repeated exponential-gap inversion. Large means are
// split into chunks so the product of uniforms never underflows.
uint64_t poisson(RandomSource& rng, double mean);

}  // namespace needle
