#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace mdchain {

// Seeded generator with platform-independent draws. std::mt19937_64 is fully
// specified by the standard; the distributions are not, so they are written
// out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Rejection sampling, unbiased.
  std::size_t below(std::size_t n);

  // Standard normal via Box-Muller.
  double normal();

  // Index drawn from unnormalized nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

  // Independent child generator for a named stream.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer, used to derive seeds for sub-streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace mdchain
