// SPDX-License-Identifier: Apache-2.0
#include "fedvar/rng.hpp"

#include <cmath>
#include <numbers>

namespace fedvar {
namespace {

constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;
constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;

std::uint32_t lo32(std::uint64_t x) { return static_cast<std::uint32_t>(x); }
std::uint32_t hi32(std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); }
std::uint64_t join(std::uint32_t lo, std::uint32_t hi) {
  return static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
}

std::array<std::uint32_t, 4> block(const std::array<std::uint64_t, 2>& digest, std::uint64_t c0,
                                   std::uint64_t c1) {
  // The second digest word enters through the counter, the first as key.
  return philox4x32({lo32(c0), hi32(c0), lo32(c1 ^ digest[1]), hi32(c1 ^ digest[1])},
                    {lo32(digest[0]), hi32(digest[0])});
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

RngKey::RngKey(std::uint64_t seed) : seed_(seed) {
  const auto out = philox4x32({lo32(seed), hi32(seed), 0x5eedu, 0u}, {0x243F6A88u, 0x85A308D3u});
  digest_ = {join(out[0], out[1]), join(out[2], out[3])};
}

RngKey RngKey::from_path(std::uint64_t seed, const std::vector<std::uint64_t>& path) {
  RngKey k(seed);
  for (std::uint64_t label : path) k = k.derive(label);
  return k;
}

RngKey RngKey::derive(std::uint64_t label) const {
  RngKey child = *this;
  child.path_.push_back(label);
  // Depth tag separates derive(k, a) from a counter value a at the same key.
  const auto out = block(digest_, label, 0xD371000000000000ULL | path_.size());
  child.digest_ = {join(out[0], out[1]), join(out[2], out[3])};
  return child;
}

std::vector<std::uint64_t> random_bits(const RngKey& key, std::size_t n) {
  std::vector<std::uint64_t> out(n);
  const auto d = key.digest();
  for (std::size_t b = 0; 2 * b < n; ++b) {
    const auto w = block(d, b, 0);
    out[2 * b] = join(w[0], w[1]);
    if (2 * b + 1 < n) out[2 * b + 1] = join(w[2], w[3]);
  }
  return out;
}

Vec uniform01(const RngKey& key, std::size_t n) {
  const auto bits = random_bits(key, n);
  Vec u(n);
  constexpr double kScale = 0x1.0p-53;
  for (std::size_t i = 0; i < n; ++i) u[i] = (static_cast<double>(bits[i] >> 11) + 0.5) * kScale;
  return u;
}

Vec std_normal(const RngKey& key, std::size_t n) {
  Vec z = uniform01(key, n);
  for (double& x : z) x = normal_quantile(x);
  return z;
}

// Acklam's rational approximation followed by one Halley step against erfc.
double normal_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -INFINITY;
    if (p == 1.0) return INFINITY;
    return NAN;
  }
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace fedvar
