// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedvar/models/model.hpp"
#include "fedvar/vfamily.hpp"

namespace fedvar {

// Verification model with a closed-form posterior:
//   Z_G ~ N(0, tau^2),  Z_Lk | Z_G ~ N(Z_G, lambda^2),  y_k | Z_Lk ~ N(Z_Lk, s^2)
// One scalar observation per unit.
class ConjugateGaussianModel final : public Model {
 public:
  ConjugateGaussianModel(double tau, double lambda, double noise);

  std::string name() const override { return "conjugate"; }
  std::size_t global_dim() const override { return 1; }
  LocalShape local_shape() const override { return {LocalKind::per_unit, 1}; }

  JointEval log_prior_global(std::span<const double> theta,
                             std::span<const double> z_G) const override;
  JointEval log_local_joint(const Shard& shard, std::span<const double> theta,
                            std::span<const double> z_G,
                            std::span<const double> z_L) const override;
  void validate(const Shard& shard) const override;

  double tau() const noexcept { return tau_; }
  double lambda() const noexcept { return lambda_; }
  double noise() const noexcept { return noise_; }

  struct Gaussian1D {
    double mean;
    double var;
  };
  // Marginal posterior of Z_G given all observations.
  Gaussian1D exact_posterior(const Dataset& data) const;
  double log_evidence(const Dataset& data) const;

  // Variational parameters that reproduce the exact posterior: the marginal
  // of Z_G, and each Z_Lk | Z_G, y_k, which is linear in Z_G.
  GlobalVarParams exact_global_params(const Dataset& data) const;
  LocalVarParams exact_local_params(const Shard& shard, const GlobalVarParams& global) const;
  // KL(q(z_G) || exact marginal posterior of Z_G).
  double kl_to_exact(const GlobalVarParams& q, const Dataset& data) const;

 private:
  double tau_;
  double lambda_;
  double noise_;
};

}  // namespace fedvar
