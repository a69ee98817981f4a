#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace e2erl {

using Rng = std::mt19937_64;

/// Seeds a generator from a run seed and a stream name, so each consumer
/// draws from an independent sequence.
Rng make_stream(std::uint64_t seed, std::string_view name);

/// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Standard normal draw (Box-Muller, no cached second value so the
/// generator state alone determines the sequence).
double standard_normal(Rng& rng);

/// The three named streams of a training run.
struct RngStreams {
  Rng init;
  Rng exploration;
  Rng environment;

  static RngStreams from_seed(std::uint64_t seed);
};

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& text);

std::uint64_t fnv1a64(std::string_view data);

}  // namespace e2erl
