#pragma once

// Counter-based random generator. Every draw is a pure function of
// (seed, stream name, counter), so simulations are reproducible for any
// thread count and any evaluation order. Stage-local substreams are
// derived by hashing the stage name.

#include <cstdint>
#include <string_view>
#include <utility>

#include "umi/common.hpp"

namespace umi {

class Rng {
 public:
  Rng() : key_(mix(0)) {}
  Rng(std::uint64_t seed, std::string_view stream)
      : key_(mix(seed ^ mix(fnv1a(stream)))) {}

  /// Uniform double in (0, 1].
  double uniform(std::uint64_t counter) const {
    std::uint64_t r = mix(key_ + 0x9e3779b97f4a7c15ULL * (counter + 1));
    return (static_cast<double>(r >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Two independent standard normal draws (Box-Muller).
  std::pair<double, double> gauss(std::uint64_t counter) const {
    double u1 = uniform(2 * counter);
    double u2 = uniform(2 * counter + 1);
    double r = std::sqrt(-2.0 * std::log(u1));
    return {r * std::cos(two_pi * u2), r * std::sin(two_pi * u2)};
  }

  /// Circular complex normal with E|z|^2 = 1.
  cdouble cgauss(std::uint64_t counter) const {
    auto [a, b] = gauss(counter);
    return cdouble(a, b) * 0.70710678118654752440;
  }

  Rng substream(std::string_view name) const {
    Rng r;
    r.key_ = mix(key_ ^ mix(fnv1a(name)));
    return r;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t key_;
};

}  // namespace umi
