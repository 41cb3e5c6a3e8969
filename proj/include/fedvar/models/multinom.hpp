// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedvar/models/model.hpp"

namespace fedvar {

// Empirical-Bayes multinomial (softmax) regression:
//   W_kc ~ N(0, sigma_W^2), b_k ~ N(0, sigma_b^2), c | W, b ~ Cat(softmax(W x + b))
// z_G = (W row-major K x d, b), no local latents,
// theta = (log sigma_W^2, log sigma_b^2) learned by maximizing the ELBO.
class MultinomRegModel final : public Model {
 public:
  MultinomRegModel(std::size_t features, std::size_t classes);

  std::string name() const override { return "multinom"; }
  std::size_t global_dim() const override { return classes_ * features_ + classes_; }
  std::size_t theta_dim() const override { return 2; }
  LocalShape local_shape() const override { return {LocalKind::per_unit, 0}; }

  JointEval log_prior_global(std::span<const double> theta,
                             std::span<const double> z_G) const override;
  JointEval log_local_joint(const Shard& shard, std::span<const double> theta,
                            std::span<const double> z_G,
                            std::span<const double> z_L) const override;
  void validate(const Shard& shard) const override;

  std::size_t num_classes() const override { return classes_; }
  Vec class_probabilities(std::span<const double> z_G, std::span<const double> z_L,
                          std::span<const double> x) const override;

  std::size_t features() const noexcept { return features_; }

 private:
  std::size_t features_;
  std::size_t classes_;
};

// Numerically stable in-place softmax; returns log-sum-exp of the input.
double softmax_inplace(std::span<double> logits);

}  // namespace fedvar
