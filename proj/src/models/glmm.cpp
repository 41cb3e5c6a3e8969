// SPDX-License-Identifier: Apache-2.0
#include "fedvar/models/glmm.hpp"

#include <cmath>

#include "fedvar/error.hpp"

namespace fedvar {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// log(1 + e^x) without overflow
double log1pexp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

JointEval LogisticMixedModel::log_prior_global(std::span<const double>,
                                               std::span<const double> z_G) const {
  require_dims(z_G.size() == 5, "glmm: z_G must have 5 entries");
  const double v = kPriorSd * kPriorSd;
  JointEval e;
  e.d_zG.assign(5, 0.0);
  for (std::size_t k = 0; k < 5; ++k) {
    e.value += -kHalfLog2Pi - std::log(kPriorSd) - 0.5 * z_G[k] * z_G[k] / v;
    e.d_zG[k] = -z_G[k] / v;
  }
  return e;
}

JointEval LogisticMixedModel::log_local_joint(const Shard& shard, std::span<const double>,
                                              std::span<const double> z_G,
                                              std::span<const double> z_L) const {
  require_dims(z_G.size() == 5, "glmm: z_G must have 5 entries");
  require_dims(z_L.size() == shard.size(), "glmm: one random intercept per subject");
  const double omega = z_G[4];
  const double prec = std::exp(2.0 * omega);
  JointEval e;
  e.d_zG.assign(5, 0.0);
  e.d_zL.assign(z_L.size(), 0.0);
  for (std::size_t i = 0; i < shard.size(); ++i) {
    const double b = z_L[i];
    // b | omega ~ N(0, exp(-2 omega))
    e.value += -kHalfLog2Pi + omega - 0.5 * b * b * prec;
    e.d_zL[i] = -b * prec;
    e.d_zG[4] += 1.0 - b * b * prec;
    for (const auto& o : shard.units[i].obs) {
      const double smoke = o.x[0];
      const double age = o.x[1];
      const double eta = z_G[0] + z_G[1] * smoke + z_G[2] * age + z_G[3] * smoke * age + b;
      e.value += o.y * eta - log1pexp(eta);
      const double r = o.y - sigmoid(eta);
      e.d_zG[0] += r;
      e.d_zG[1] += r * smoke;
      e.d_zG[2] += r * age;
      e.d_zG[3] += r * smoke * age;
      e.d_zL[i] += r;
    }
  }
  return e;
}

void LogisticMixedModel::validate(const Shard& shard) const {
  for (const auto& u : shard.units) {
    for (const auto& o : u.obs) {
      if (o.x.size() != 2) throw ConfigError("glmm: observation needs (smoke, age_c)");
      if (o.y != 0.0 && o.y != 1.0) throw ConfigError("glmm: labels must be 0 or 1");
    }
  }
}

}  // namespace fedvar
