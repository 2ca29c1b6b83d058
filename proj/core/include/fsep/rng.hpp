#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace fsep {

/// Purpose-specific seed offsets. Each component of a run draws from its own
/// stream so that, e.g., changing the episode count never shifts the
/// validation draws.
enum class Stream : uint64_t {
  sampling = 1,
  init = 2,
  validation = 3,
  evaluation = 4,
  spectrum = 5,
};

/// Deterministic random source. The generator is std::mt19937_64, which the
/// C++ standard pins bit-exactly, seeded directly with a 64-bit seed.
/// Distribution transforms (bounded ints, normals) are implemented here
/// rather than with std::*_distribution, whose output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

  static Rng for_stream(uint64_t run_seed, Stream stream) {
    return Rng(run_seed * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(stream));
  }

  static constexpr const char* algorithm_id() { return "mt19937_64"; }

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound) by rejection; no modulo bias.
  uint64_t uniform_below(uint64_t bound);

  /// Uniform in [0, 1): 53 mantissa bits of one raw draw.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller. Consumes exactly two raw draws per
  /// call (no pair caching), so replay depends only on the call sequence.
  double normal();

  /// Engine state round-trip for checkpointing. Text is the decimal word
  /// dump of mt19937_64, locale-independent.
  std::string state_string() const;
  void restore_state(const std::string& state);

 private:
  uint64_t seed_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace fsep
