#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace bag {

// Counter-based generator: output depends only on (key, counter), so streams
// can be split per seed and results do not depend on call scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x8b5fb0fa2c553c4eULL)) {}

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

  // Independent stream derived from this one; does not advance the counter.
  Rng split(std::uint64_t stream) const {
    Rng r(0);
    r.key_ = mix(key_ ^ mix(stream + 0x3c6ef372fe94f82bULL));
    r.counter_ = 0;
    return r;
  }

  // Uniform in (0, 1).
  double uniform() {
    const std::uint64_t bits = next_u64() >> 11;  // 53 bits
    double u = static_cast<double>(bits) * 0x1.0p-53;
    if (u <= 0.0) u = 0x1.0p-53;
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; two uniforms per draw.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Index i with probability probs[i]; probs must sum to 1.
  int categorical(const std::vector<double>& probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u <= acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace bag
