// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedvar/models/model.hpp"

namespace fedvar {

// Hierarchical two-layer Bayesian network with a non-centred first layer:
//   mu_ik ~ N(0, 1), sigma ~ N+(0, 1), eps^(j)_ik ~ N(0, 1), W2^(j) ~ N(0, 1)
//   W1^(j) = mu + sigma eps^(j),  f_j(x) = softmax(W2^(j) ReLU(W1^(j) x))
// z_G = (mu row-major hidden x input, log sigma); sigma is optimized on the
// log scale with the change-of-variables term in the prior.
// z_Lj = (eps^(j) row-major hidden x input, W2^(j) row-major classes x hidden).
class ToyHierBNNModel final : public Model {
 public:
  ToyHierBNNModel(std::size_t inputs, std::size_t hidden, std::size_t classes);

  std::string name() const override { return "hierbnn"; }
  std::size_t global_dim() const override { return hidden_ * inputs_ + 1; }
  LocalShape local_shape() const override {
    return {LocalKind::per_silo, hidden_ * inputs_ + classes_ * hidden_};
  }

  JointEval log_prior_global(std::span<const double> theta,
                             std::span<const double> z_G) const override;
  JointEval log_local_joint(const Shard& shard, std::span<const double> theta,
                            std::span<const double> z_G,
                            std::span<const double> z_L) const override;
  void validate(const Shard& shard) const override;

  std::size_t num_classes() const override { return classes_; }
  Vec class_probabilities(std::span<const double> z_G, std::span<const double> z_L,
                          std::span<const double> x) const override;
  // W1 x, exposed so tests can steer clear of ReLU kinks.
  Vec hidden_preactivations(std::span<const double> z_G, std::span<const double> z_L,
                            std::span<const double> x) const;

  std::size_t inputs() const noexcept { return inputs_; }
  std::size_t hidden() const noexcept { return hidden_; }

 private:
  Mat first_layer(std::span<const double> z_G, std::span<const double> z_L) const;

  std::size_t inputs_;
  std::size_t hidden_;
  std::size_t classes_;
};

}  // namespace fedvar
