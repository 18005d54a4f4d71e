#pragma once

#include <array>
#include <cstdint>

namespace mccle {

/// splitmix64 finalizer; good bit mixing for seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Labels for independent substreams derived from one run seed. Every
/// consumer owns a (kind, payload) pair, so adding draws to one stage never
/// shifts the values seen by another and per-item streams can be generated
/// in parallel.
enum class StreamKind : std::uint64_t {
  Geometry = 1,
  Measurement = 2,
  Split = 3,
  Shuffle = 4,
  TrainCandidates = 5,
  ValCandidates = 6,
  ParamInit = 7,
  EvalCandidates = 8,
  Scenario = 9,
};

inline std::uint64_t stream_id(StreamKind kind, std::uint64_t payload = 0) {
  return (static_cast<std::uint64_t>(kind) << 56) ^ payload;
}

/// xoshiro256++ stream seeded from (seed, stream) via splitmix64. Distinct
/// stream ids give statistically independent sequences for the same seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller; pairs are cached.
  double normal();

  /// Uniform integer in [0, bound), unbiased.
  std::uint64_t next_below(std::uint64_t bound);

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_normal_ = 0.0;
  bool has_spare_normal_ = false;
};

}  // namespace mccle
