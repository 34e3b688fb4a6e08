#pragma once

// Binary container for posterior approximations.
//
//   magic      4 bytes  "BMAF"
//   version    u32      (currently 1)
//   tag        u32      0 Dirac ensemble, 1 factorized Gaussian, 2 SWAG, 3 mixture
//   layout     u32 L, then L+1 u32 layer sizes, then L u8 bias flags
//   payload    per tag, see below
//
// Dirac:       u64 count, then count x d doubles
// Factorized:  d doubles mean, d doubles log-std
// SWAG:        u64 K, d doubles mean, d doubles diagonal variance,
//              d x K doubles deviations (column-major)
// Mixture:     u64 components, then per component a u32 tag and its payload
//
// Integers and IEEE-754 doubles are little-endian. Every component of a
// mixture shares the layout in the header.

#include <cstdint>
#include <string>
#include <vector>

#include "bmaforge/inference.hpp"
#include "bmaforge/model.hpp"

namespace bmaforge {

constexpr std::uint32_t kPosteriorFormatVersion = 1;

struct StoredPosterior {
  NetworkSpec spec;
  PosteriorApprox posterior;
};

std::vector<std::uint8_t> serialize_posterior(const NetworkSpec& spec,
                                              const PosteriorApprox& posterior);
/// Throws ParseError on a bad magic, unknown version or tag, or truncation.
StoredPosterior deserialize_posterior(const std::vector<std::uint8_t>& bytes);

void write_posterior(const NetworkSpec& spec, const PosteriorApprox& posterior,
                     const std::string& path);
StoredPosterior read_posterior(const std::string& path);

}  // namespace bmaforge
