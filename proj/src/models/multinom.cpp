// SPDX-License-Identifier: Apache-2.0
#include "fedvar/models/multinom.hpp"

#include <algorithm>
#include <cmath>

#include "fedvar/error.hpp"
#include "fedvar/kernels.hpp"

namespace fedvar {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Sum over a block of i.i.d. N(0, exp(log_var)) terms; accumulates gradients.
double gaussian_block(std::span<const double> z, double log_var, std::span<double> dz,
                      double& d_log_var) {
  const double inv = std::exp(-log_var);
  const double ss = kernels::dot(z, z);
  const double n = static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) dz[i] = -z[i] * inv;
  d_log_var = -0.5 * n + 0.5 * ss * inv;
  return -n * kHalfLog2Pi - 0.5 * n * log_var - 0.5 * ss * inv;
}

}  // namespace

double softmax_inplace(std::span<double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : logits) v /= s;
  return mx + std::log(s);
}

MultinomRegModel::MultinomRegModel(std::size_t features, std::size_t classes)
    : features_(features), classes_(classes) {
  if (features == 0) throw ConfigError("multinom: need at least one feature");
  if (classes < 2) throw ConfigError("multinom: need at least two classes");
}

JointEval MultinomRegModel::log_prior_global(std::span<const double> theta,
                                             std::span<const double> z_G) const {
  require_dims(theta.size() == 2, "multinom: theta has two entries");
  require_dims(z_G.size() == global_dim(), "multinom: z_G dimension mismatch");
  const std::size_t nw = classes_ * features_;
  JointEval e;
  e.d_zG.assign(z_G.size(), 0.0);
  e.d_theta.assign(2, 0.0);
  std::span<double> dz(e.d_zG);
  e.value = gaussian_block(z_G.subspan(0, nw), theta[0], dz.subspan(0, nw), e.d_theta[0]) +
            gaussian_block(z_G.subspan(nw), theta[1], dz.subspan(nw), e.d_theta[1]);
  return e;
}

JointEval MultinomRegModel::log_local_joint(const Shard& shard, std::span<const double> theta,
                                            std::span<const double> z_G,
                                            std::span<const double> z_L) const {
  require_dims(theta.size() == 2, "multinom: theta has two entries");
  require_dims(z_G.size() == global_dim(), "multinom: z_G dimension mismatch");
  require_dims(z_L.empty(), "multinom: no local latents");
  const std::size_t K = classes_;
  const std::size_t d = features_;
  const std::size_t nw = K * d;
  JointEval e;
  e.d_zG.assign(z_G.size(), 0.0);
  e.d_theta.assign(2, 0.0);
  Vec p(K);
  for (const auto& u : shard.units) {
    for (const auto& o : u.obs) {
      for (std::size_t k = 0; k < K; ++k) {
        p[k] = kernels::dot(z_G.subspan(k * d, d), o.x) + z_G[nw + k];
      }
      const auto label = static_cast<std::size_t>(o.y);
      const double logit_y = p[label];
      e.value += logit_y - softmax_inplace(p);
      for (std::size_t k = 0; k < K; ++k) {
        const double r = (k == label ? 1.0 : 0.0) - p[k];
        kernels::axpy(r, o.x, std::span<double>(e.d_zG).subspan(k * d, d));
        e.d_zG[nw + k] += r;
      }
    }
  }
  return e;
}

void MultinomRegModel::validate(const Shard& shard) const {
  for (const auto& u : shard.units) {
    for (const auto& o : u.obs) {
      if (o.x.size() != features_) throw ConfigError("multinom: feature dimension mismatch");
      if (o.y < 0.0 || o.y >= static_cast<double>(classes_) || o.y != std::floor(o.y)) {
        throw ConfigError("multinom: label out of range");
      }
    }
  }
}

Vec MultinomRegModel::class_probabilities(std::span<const double> z_G, std::span<const double>,
                                          std::span<const double> x) const {
  require_dims(x.size() == features_, "multinom: feature dimension mismatch");
  Vec p(classes_);
  for (std::size_t k = 0; k < classes_; ++k) {
    p[k] = kernels::dot(z_G.subspan(k * features_, features_), x) + z_G[classes_ * features_ + k];
  }
  softmax_inplace(p);
  return p;
}

}  // namespace fedvar
