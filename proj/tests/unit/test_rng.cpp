// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "fedvar/rng.hpp"

namespace {

using namespace fedvar;

TEST(Philox, KnownAnswer) {
  // Random123 known-answer vectors for philox4x32-10.
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}),
            (std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                       {0xffffffffu, 0xffffffffu}),
            (std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                       {0xa4093822u, 0x299f31d0u}),
            (std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Derive, DeterministicAndPathSensitive) {
  const RngKey k(42);
  EXPECT_EQ(derive(k, 0), derive(k, 0));
  EXPECT_EQ(derive(k, 0).digest(), derive(k, 0).digest());
  EXPECT_NE(std_normal(derive(k, 0), 1000), std_normal(derive(k, 1), 1000));
  EXPECT_NE(std_normal(derive(derive(k, 1), 2), 100), std_normal(derive(derive(k, 2), 1), 100));
}

TEST(Derive, DistinctPathsGiveDistinctDigests) {
  std::set<std::array<std::uint64_t, 2>> seen;
  const RngKey root(3);
  for (std::uint64_t a = 0; a < 40; ++a) {
    seen.insert(root.derive(a).digest());
    for (std::uint64_t b = 0; b < 40; ++b) seen.insert(root.derive(a).derive(b).digest());
  }
  EXPECT_EQ(seen.size(), 40u + 40u * 40u);
  EXPECT_NE(RngKey(1).digest(), RngKey(2).digest());
}

TEST(Derive, FromPathRebuildsKey) {
  const RngKey k = RngKey(77).derive(5).derive(rng_label::kGlobal);
  const RngKey r = RngKey::from_path(k.seed(), k.path());
  EXPECT_EQ(r, k);
  EXPECT_EQ(r.digest(), k.digest());
}

TEST(StdNormal, DeterministicAndPrefixStable) {
  const RngKey k = RngKey(8).derive(1);
  const Vec a = std_normal(k, 50);
  EXPECT_EQ(a, std_normal(k, 50));
  const Vec b = std_normal(k, 20);
  EXPECT_TRUE(std::equal(b.begin(), b.end(), a.begin()));
}

TEST(StdNormal, Moments) {
  const std::size_t n = 100000;
  const Vec x = std_normal(RngKey(2024).derive(9), n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(static_cast<double>(n)));
  EXPECT_LT(std::abs(var - 1.0), 0.05);
}

TEST(Uniform, OpenInterval) {
  const Vec u = uniform01(RngKey(1), 10000);
  for (double v : u) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(NormalQuantile, InvertsCdf) {
  for (double p : {1e-300, 1e-12, 1e-5, 0.02425, 0.1, 0.5, 0.77, 0.97575, 1 - 1e-9}) {
    const double z = normal_quantile(p);
    const double back = 0.5 * std::erfc(-z / std::sqrt(2.0));
    EXPECT_NEAR(back / p, 1.0, 1e-12) << p;
  }
  EXPECT_EQ(normal_quantile(0.5), 0.0);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-14);
}

TEST(NormalQuantile, Symmetric) {
  // q and 1 - q are both exact, so the pair is exactly complementary.
  for (double p : {1e-8, 0.01, 0.3}) {
    const double q = 1 - p;
    EXPECT_NEAR(normal_quantile(1 - q), -normal_quantile(q), 1e-9);
  }
}

}  // namespace
