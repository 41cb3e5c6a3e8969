// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fedvar/linalg.hpp"

namespace fedvar {

// Stateless, splittable key for a counter-based generator (Philox4x32-10).
// A key is its root seed plus the label path used to reach it; the 128-bit
// digest is folded from that path so derivation order matters.
class RngKey {
 public:
  RngKey() : RngKey(0) {}
  explicit RngKey(std::uint64_t seed);

  // Rebuilds a key from a recorded (seed, path) pair.
  static RngKey from_path(std::uint64_t seed, const std::vector<std::uint64_t>& path);

  RngKey derive(std::uint64_t label) const;

  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<std::uint64_t>& path() const noexcept { return path_; }
  std::array<std::uint64_t, 2> digest() const noexcept { return digest_; }

  friend bool operator==(const RngKey& a, const RngKey& b) {
    return a.seed_ == b.seed_ && a.path_ == b.path_;
  }

 private:
  std::uint64_t seed_;
  std::vector<std::uint64_t> path_;
  std::array<std::uint64_t, 2> digest_;
};

inline RngKey derive(const RngKey& key, std::uint64_t label) { return key.derive(label); }

// Stream labels. Noise for round r is keyed by paths under derive(run, r).
namespace rng_label {
inline constexpr std::uint64_t kGlobal = 0x676c6f62616cULL;      // "global"
inline constexpr std::uint64_t kLocal = 0x6c6f63616cULL;         // "local", then global index
inline constexpr std::uint64_t kLocalSilo = 0x73696c6fULL;       // "silo", then silo id
inline constexpr std::uint64_t kEval = 0x6576616cULL;            // diagnostics only
inline constexpr std::uint64_t kData = 0x64617461ULL;            // synthetic data
inline constexpr std::uint64_t kInit = 0x696e6974ULL;            // parameter init
inline constexpr std::uint64_t kSample = 0x73616d70ULL;          // extra Monte Carlo samples
}  // namespace rng_label

// Raw Philox4x32-10 block: exposed for tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// n 64-bit words, word i depends only on (key, i).
std::vector<std::uint64_t> random_bits(const RngKey& key, std::size_t n);
// n uniforms in the open interval (0, 1), one 64-bit word each.
Vec uniform01(const RngKey& key, std::size_t n);
// n standard normals by inverse CDF, one uniform each.
Vec std_normal(const RngKey& key, std::size_t n);

// Inverse standard normal CDF, accurate to a few ulp on (0, 1).
double normal_quantile(double p);

}  // namespace fedvar
