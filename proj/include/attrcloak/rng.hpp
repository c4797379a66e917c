#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace attrcloak {

// Counter-based deterministic RNG. Every draw is a pure function of
// (seed, stream, counter), so any value can be regenerated in isolation:
// parallel workers and reordered loops cannot perturb the sequence.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  uint64_t seed() const { return seed_; }

  static uint64_t mix(uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
  }

  uint64_t u64(uint64_t stream, uint64_t counter) const {
    uint64_t a = mix(seed_ + 0x9e3779b97f4a7c15ull);
    uint64_t b = mix(a ^ (stream + 0xa0761d6478bd642full));
    return mix(b ^ (counter + 0xe7037ed1a0b428dbull));
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform(uint64_t stream, uint64_t counter) const {
    return static_cast<double>(u64(stream, counter) >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(uint64_t stream, uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(stream, counter);
  }

  // Uniform integer in [0, n), n > 0.
  uint64_t uniform_int(uint64_t stream, uint64_t counter, uint64_t n) const {
    return u64(stream, counter) % n;
  }

  // Standard normal pair via Box-Muller; one counter yields two values.
  std::pair<double, double> gauss_pair(uint64_t stream, uint64_t counter) const {
    // u1 in (0, 1] keeps the log finite.
    double u1 = (static_cast<double>(u64(stream, counter * 2) >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform(stream, counter * 2 + 1);
    constexpr double two_pi = 6.283185307179586476925287;
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = two_pi * u2;
    return {r * std::cos(th), r * std::sin(th)};
  }

  double gauss(uint64_t stream, uint64_t counter) const {
    return gauss_pair(stream, counter).first;
  }

 private:
  uint64_t seed_;
};

// Stream ids are built from a small tag plus indices so call sites never
// collide by accident.
constexpr uint64_t stream_id(uint64_t tag, uint64_t a = 0, uint64_t b = 0) {
  return (tag << 48) ^ (a << 20) ^ b;
}

}  // namespace attrcloak
