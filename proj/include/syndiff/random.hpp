#pragma once

#include <cstdint>
#include <random>

#include "syndiff/tensor.hpp"

namespace syndiff {

/// Single generator type used for every random draw.
using Rng = std::mt19937_64;

/// Independent stream for one purpose (training, init, sampling) of a run.
enum class Stream : std::uint32_t { Init = 1, Train = 2, Sample = 3, Baseline = 4 };

inline Rng stream_rng(std::uint64_t seed, Stream purpose, std::uint32_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), index};
  return Rng(seq);
}

/// Standard normal entries.
template <typename T>
BasicTensor<T> randn(const Shape& shape, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(normal(rng));
  return BasicTensor<T>(shape, std::move(v));
}

}  // namespace syndiff
