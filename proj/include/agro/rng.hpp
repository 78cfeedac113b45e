#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace agro {

// The engine is std::mt19937_64 (its output sequence is fixed by the
// standard). The std distributions are implementation-defined, so the
// helpers below are written out to keep models byte-identical across
// standard libraries.
using Rng = std::mt19937_64;

/// Uniform integer in [0, bound), rejection-sampled to avoid modulo bias.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  // 2^64 mod bound; draws below it fall in the incomplete top bucket.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t draw = rng();
    if (draw >= threshold) return draw % bound;
  }
}

/// Uniform double in [0, 1) with 53 bits of mantissa.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace agro
