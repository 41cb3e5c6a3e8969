// SPDX-License-Identifier: Apache-2.0
#include "fedvar/models/hierbnn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fedvar/error.hpp"
#include "fedvar/kernels.hpp"
#include "fedvar/models/multinom.hpp"

namespace fedvar {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace

ToyHierBNNModel::ToyHierBNNModel(std::size_t inputs, std::size_t hidden, std::size_t classes)
    : inputs_(inputs), hidden_(hidden), classes_(classes) {
  if (inputs == 0 || inputs > 8) throw ConfigError("hierbnn: input dim must be in 1..8");
  if (hidden == 0 || hidden > 16) throw ConfigError("hierbnn: hidden width must be in 1..16");
  if (classes < 2 || classes > 4) throw ConfigError("hierbnn: classes must be in 2..4");
}

JointEval ToyHierBNNModel::log_prior_global(std::span<const double>,
                                            std::span<const double> z_G) const {
  require_dims(z_G.size() == global_dim(), "hierbnn: z_G dimension mismatch");
  const std::size_t nmu = hidden_ * inputs_;
  const auto mu = z_G.subspan(0, nmu);
  const double log_sigma = z_G[nmu];
  const double sigma = std::exp(log_sigma);
  JointEval e;
  e.d_zG.assign(z_G.size(), 0.0);
  const double ss = kernels::dot(mu, mu);
  e.value = -static_cast<double>(nmu) * kHalfLog2Pi - 0.5 * ss;
  for (std::size_t i = 0; i < nmu; ++i) e.d_zG[i] = -mu[i];
  // Half-normal on sigma plus log|d sigma / d log sigma|.
  e.value += std::numbers::ln2 - kHalfLog2Pi - 0.5 * sigma * sigma + log_sigma;
  e.d_zG[nmu] = 1.0 - sigma * sigma;
  return e;
}

Mat ToyHierBNNModel::first_layer(std::span<const double> z_G, std::span<const double> z_L) const {
  const std::size_t nmu = hidden_ * inputs_;
  Mat w1(hidden_, inputs_);
  kernels::scale_add(z_G.subspan(0, nmu), std::exp(z_G[nmu]), z_L.subspan(0, nmu), w1.data);
  return w1;
}

JointEval ToyHierBNNModel::log_local_joint(const Shard& shard, std::span<const double>,
                                           std::span<const double> z_G,
                                           std::span<const double> z_L) const {
  require_dims(z_G.size() == global_dim(), "hierbnn: z_G dimension mismatch");
  require_dims(z_L.size() == local_shape().dim, "hierbnn: z_L dimension mismatch");
  const std::size_t H = hidden_;
  const std::size_t D = inputs_;
  const std::size_t K = classes_;
  const std::size_t nmu = H * D;
  const double sigma = std::exp(z_G[nmu]);
  const auto eps = z_L.subspan(0, nmu);
  const auto w2 = z_L.subspan(nmu, K * H);
  const Mat w1 = first_layer(z_G, z_L);

  JointEval e;
  e.d_zG.assign(z_G.size(), 0.0);
  e.d_zL.assign(z_L.size(), 0.0);
  std::span<double> d_eps(e.d_zL.data(), nmu);
  std::span<double> d_w2(e.d_zL.data() + nmu, K * H);

  // N(0, 1) priors on eps and W2.
  e.value = -static_cast<double>(z_L.size()) * kHalfLog2Pi - 0.5 * kernels::dot(z_L, z_L);

  Vec dw1(nmu, 0.0);
  Vec a1(H), r(H), p(K), dr(H);
  for (const auto& u : shard.units) {
    for (const auto& o : u.obs) {
      for (std::size_t h = 0; h < H; ++h) {
        a1[h] = kernels::dot(w1.row(h), o.x);
        r[h] = a1[h] > 0.0 ? a1[h] : 0.0;
      }
      for (std::size_t k = 0; k < K; ++k) p[k] = kernels::dot(w2.subspan(k * H, H), r);
      const auto label = static_cast<std::size_t>(o.y);
      const double logit_y = p[label];
      e.value += logit_y - softmax_inplace(p);
      std::fill(dr.begin(), dr.end(), 0.0);
      for (std::size_t k = 0; k < K; ++k) {
        const double delta = (k == label ? 1.0 : 0.0) - p[k];
        kernels::axpy(delta, r, d_w2.subspan(k * H, H));
        kernels::axpy(delta, w2.subspan(k * H, H), dr);
      }
      for (std::size_t h = 0; h < H; ++h) {
        if (a1[h] > 0.0) kernels::axpy(dr[h], o.x, std::span<double>(dw1).subspan(h * D, D));
      }
    }
  }
  // W1 = mu + sigma eps
  double d_log_sigma = 0.0;
  for (std::size_t i = 0; i < nmu; ++i) {
    e.d_zG[i] = dw1[i];
    d_eps[i] = sigma * dw1[i] - eps[i];
    d_log_sigma += dw1[i] * eps[i];
  }
  e.d_zG[nmu] = sigma * d_log_sigma;
  for (std::size_t i = 0; i < K * H; ++i) d_w2[i] -= w2[i];
  return e;
}

void ToyHierBNNModel::validate(const Shard& shard) const {
  for (const auto& u : shard.units) {
    for (const auto& o : u.obs) {
      if (o.x.size() != inputs_) throw ConfigError("hierbnn: feature dimension mismatch");
      if (o.y < 0.0 || o.y >= static_cast<double>(classes_) || o.y != std::floor(o.y)) {
        throw ConfigError("hierbnn: label out of range");
      }
    }
  }
}

Vec ToyHierBNNModel::hidden_preactivations(std::span<const double> z_G,
                                           std::span<const double> z_L,
                                           std::span<const double> x) const {
  require_dims(x.size() == inputs_, "hierbnn: feature dimension mismatch");
  return matvec(first_layer(z_G, z_L), x);
}

Vec ToyHierBNNModel::class_probabilities(std::span<const double> z_G,
                                         std::span<const double> z_L,
                                         std::span<const double> x) const {
  Vec r = hidden_preactivations(z_G, z_L, x);
  for (double& v : r) v = v > 0.0 ? v : 0.0;
  const auto w2 = z_L.subspan(hidden_ * inputs_, classes_ * hidden_);
  Vec p(classes_);
  for (std::size_t k = 0; k < classes_; ++k) p[k] = kernels::dot(w2.subspan(k * hidden_, hidden_), r);
  softmax_inplace(p);
  return p;
}

}  // namespace fedvar
