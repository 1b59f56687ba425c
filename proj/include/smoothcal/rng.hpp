#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace smoothcal {

/// Deterministic random stream used by every generator in the library.
///
/// Uniform bits come from std::mt19937_64, whose output sequence is fixed by
/// the C++ standard. Doubles and Gaussians are derived by hand so the stream
/// is reproducible in any language that implements MT19937-64:
///   uniform()  = (next() >> 11) * 2^-53            in [0, 1)
///   gaussian() = Box-Muller on (1 - u1, u2), cosine branch only, one pair of
///                uniforms consumed per normal draw.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();
  double gaussian();
  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }
  // Uniform integer in [0, bound): rejection below the largest multiple of
  // bound, then x % bound.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::mt19937_64 engine_;
};

/// FNV-1a 64-bit hash of a purpose tag.
std::uint64_t hash_tag(std::string_view tag);

/// SplitMix64 finalizer; bijective mixing of 64-bit words.
std::uint64_t mix64(std::uint64_t x);

/// Child seed for a named purpose: mix64(seed ^ hash_tag(tag)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace smoothcal
