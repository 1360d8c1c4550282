#pragma once

#include "regkacz/types.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>

namespace regkacz {

/// splitmix64 stream with a Box-Muller gaussian on top. std::normal_distribution
/// is implementation-defined, which would make seeded artifacts non-portable
/// across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in (0, 1].
  double next_uniform() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  double next_gaussian() {
    const double u = next_uniform();
    const double v = next_uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
  }

  Vector gaussian_vector(Index n) {
    Vector g(n);
    for (Index i = 0; i < n; ++i) g[i] = next_gaussian();
    return g;
  }

private:
  std::uint64_t state_;
};

/// Decorrelates sub-streams derived from one user-facing seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng r(seed ^ (0x632be59bd9b4e019ull * (stream + 1)));
  return r.next_u64();
}

}  // namespace regkacz
