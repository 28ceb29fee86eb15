#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace milodo {

// Deterministic random stream. Distributions are implemented by hand so the
// generated sequences are identical across standard library versions and can
// be re-derived independently in tests.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Draws exactly two uniforms per call and
  // keeps no cached spare, so the stream position is easy to reason about.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [lo, hi] by rejection-free modulo on 64 bits.
  std::uint64_t uniform_index(std::uint64_t bound) { return gen_() % bound; }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace milodo
