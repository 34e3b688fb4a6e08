#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace bmaforge {

using Rng = std::mt19937_64;

/// Seed for the `index`-th independent worker of a replicated computation.
/// Members of an ensemble use `base + index`; this form keeps that rule in
/// one place.
inline std::uint64_t member_seed(std::uint64_t base, std::uint64_t index) {
  return base + index;
}

/// Decorrelated child seed for nested streams (per-sample noise inside one
/// member, per-image crops, ...). SplitMix64 finalizer.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
  return z;
}

}  // namespace bmaforge
