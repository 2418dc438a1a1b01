#pragma once

#include <cmath>
#include <cstdint>

namespace blockpde::rng {

// splitmix64: cheap stateless mixing, used to derive independent streams
// from (seed, index) pairs so parallel sampling stays reproducible.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive(uint64_t seed, uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x1234567ULL));
}

// Counter-based generator: draws are a pure function of (state, counter),
// so a stream can be re-created from its seed alone.
class Stream {
public:
  explicit Stream(uint64_t seed) : state_(splitmix64(seed)) {}

  uint64_t next_u64() {
    counter_++;
    return splitmix64(state_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // standard normal via Box-Muller (no state carried between calls)
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Fisher-Yates over [0, n)
  template <typename T>
  void shuffle(T* data, size_t n) {
    for (size_t i = n; i > 1; --i) {
      size_t j = static_cast<size_t>(next_u64() % i);
      T tmp = data[i - 1];
      data[i - 1] = data[j];
      data[j] = tmp;
    }
  }

private:
  uint64_t state_;
  uint64_t counter_ = 0;
};

}  // namespace blockpde::rng
