#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace isoimm {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seeded generator with fully specified conversions.
///
/// The engine is std::mt19937_64 (exactly specified by the standard). Stream s
/// of seed k is seeded with splitmix64(k ^ splitmix64(s)). Doubles use the top
/// 53 bits; normals use Box-Muller; bounded integers use rejection sampling.
/// None of the standard distributions are used, so draws are reproducible
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);
  Rng(std::uint64_t seed, std::string_view stream_name);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t stream_id(std::string_view name);

}  // namespace isoimm
