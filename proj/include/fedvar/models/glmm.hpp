// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedvar/models/model.hpp"

namespace fedvar {

// Bayesian logistic mixed model with a random intercept per subject:
//   logit p_iv = b0 + b1 smoke_i + b2 age_iv + b3 smoke_i age_iv + b_i
//   b_k ~ N(0, 10^2), omega ~ N(0, 10^2), b_i | omega ~ N(0, exp(-2 omega))
// z_G = (b0, b1, b2, b3, omega); one local latent b_i per subject.
// Each unit is a subject; observation x = (smoke, age_c), y in {0, 1}.
class LogisticMixedModel final : public Model {
 public:
  static constexpr double kPriorSd = 10.0;

  std::string name() const override { return "glmm"; }
  std::size_t global_dim() const override { return 5; }
  LocalShape local_shape() const override { return {LocalKind::per_unit, 1}; }

  JointEval log_prior_global(std::span<const double> theta,
                             std::span<const double> z_G) const override;
  JointEval log_local_joint(const Shard& shard, std::span<const double> theta,
                            std::span<const double> z_G,
                            std::span<const double> z_L) const override;
  void validate(const Shard& shard) const override;
};

}  // namespace fedvar
