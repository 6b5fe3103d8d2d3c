#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace cgrpo {

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent seed for a named stream. Every random draw in the
// project goes through a seed derived from one root seed this way, so that
// e.g. evaluation sampling never shares state with training sampling.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::initializer_list<std::uint64_t> indices = {});

// Thin wrapper over mt19937_64 with a portable uniform conversion
// (std::uniform_real_distribution is implementation-defined).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), n > 0. Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n);

private:
  std::mt19937_64 engine_;
};

} // namespace cgrpo
