// SPDX-License-Identifier: Apache-2.0
#include "fedvar/models/conjugate.hpp"

#include <cmath>

#include "fedvar/error.hpp"

namespace fedvar {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double log_normal(double x, double mean, double var) {
  const double r = x - mean;
  return -kHalfLog2Pi - 0.5 * std::log(var) - 0.5 * r * r / var;
}

}  // namespace

ConjugateGaussianModel::ConjugateGaussianModel(double tau, double lambda, double noise)
    : tau_(tau), lambda_(lambda), noise_(noise) {
  if (!(tau > 0.0 && lambda > 0.0 && noise > 0.0)) {
    throw ConfigError("conjugate model: scales must be positive");
  }
}

JointEval ConjugateGaussianModel::log_prior_global(std::span<const double>,
                                                   std::span<const double> z_G) const {
  require_dims(z_G.size() == 1, "conjugate: z_G must be scalar");
  const double v = tau_ * tau_;
  return {log_normal(z_G[0], 0.0, v), {}, {-z_G[0] / v}, {}};
}

JointEval ConjugateGaussianModel::log_local_joint(const Shard& shard, std::span<const double>,
                                                  std::span<const double> z_G,
                                                  std::span<const double> z_L) const {
  require_dims(z_G.size() == 1, "conjugate: z_G must be scalar");
  require_dims(z_L.size() == shard.size(), "conjugate: one local latent per unit");
  const double lv = lambda_ * lambda_;
  const double nv = noise_ * noise_;
  JointEval e;
  e.d_zG.assign(1, 0.0);
  e.d_zL.assign(z_L.size(), 0.0);
  for (std::size_t k = 0; k < shard.size(); ++k) {
    const double y = shard.units[k].obs[0].y;
    const double zl = z_L[k];
    e.value += log_normal(zl, z_G[0], lv) + log_normal(y, zl, nv);
    const double dprior = (zl - z_G[0]) / lv;
    e.d_zG[0] += dprior;
    e.d_zL[k] = -dprior + (y - zl) / nv;
  }
  return e;
}

void ConjugateGaussianModel::validate(const Shard& shard) const {
  for (const auto& u : shard.units) {
    if (u.obs.size() != 1) throw ConfigError("conjugate: each unit holds exactly one observation");
  }
}

ConjugateGaussianModel::Gaussian1D ConjugateGaussianModel::exact_posterior(
    const Dataset& data) const {
  const double a = lambda_ * lambda_ + noise_ * noise_;
  double sum = 0.0;
  for (const auto& s : data.silos)
    for (const auto& u : s.units) sum += u.obs[0].y;
  const double n = static_cast<double>(data.total_units());
  const double precision = 1.0 / (tau_ * tau_) + n / a;
  return {(sum / a) / precision, 1.0 / precision};
}

// y ~ N(0, a I + tau^2 11^T), a = lambda^2 + s^2, via Sherman-Morrison.
double ConjugateGaussianModel::log_evidence(const Dataset& data) const {
  const double a = lambda_ * lambda_ + noise_ * noise_;
  const double t2 = tau_ * tau_;
  double sum = 0.0;
  double sumsq = 0.0;
  for (const auto& s : data.silos) {
    for (const auto& u : s.units) {
      sum += u.obs[0].y;
      sumsq += u.obs[0].y * u.obs[0].y;
    }
  }
  const double n = static_cast<double>(data.total_units());
  const double logdet = (n - 1.0) * std::log(a) + std::log(a + n * t2);
  const double quad = (sumsq - t2 * sum * sum / (a + n * t2)) / a;
  return -n * kHalfLog2Pi - 0.5 * logdet - 0.5 * quad;
}

GlobalVarParams ConjugateGaussianModel::exact_global_params(const Dataset& data) const {
  const Gaussian1D post = exact_posterior(data);
  GlobalVarParams g = GlobalVarParams::initial(1, true);
  g.mu[0] = post.mean;
  g.log_sigma[0] = 0.5 * std::log(post.var);
  return g;
}

LocalVarParams ConjugateGaussianModel::exact_local_params(const Shard& shard,
                                                          const GlobalVarParams& global) const {
  const double lv = lambda_ * lambda_;
  const double nv = noise_ * noise_;
  const double gain = nv / (lv + nv);  // weight on z_G in the conditional mean
  const double var = lv * nv / (lv + nv);
  LocalVarParams p = LocalVarParams::initial(shard.size(), 1, default_local_blocks(shard), true);
  for (std::size_t k = 0; k < shard.size(); ++k) {
    const double y = shard.units[k].obs[0].y;
    p.mu_bar[k] = gain * global.mu[0] + (1.0 - gain) * y;
    p.C(k, 0) = gain;
    p.log_sigma[k] = 0.5 * std::log(var);
  }
  return p;
}

double ConjugateGaussianModel::kl_to_exact(const GlobalVarParams& q, const Dataset& data) const {
  require_dims(q.dim() == 1, "conjugate: global dimension is 1");
  const Gaussian1D post = exact_posterior(data);
  const double s = std::exp(q.log_sigma[0]);
  const double vq = s * s;
  const double d = q.mu[0] - post.mean;
  return 0.5 * (std::log(post.var / vq) + (vq + d * d) / post.var - 1.0);
}

}  // namespace fedvar
