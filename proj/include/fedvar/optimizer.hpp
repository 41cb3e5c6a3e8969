// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "fedvar/linalg.hpp"

namespace fedvar {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // Throws ConfigError for out-of-range hyperparameters.
  void validate() const;
};

enum class Direction { ascend, descend };

struct AdamState {
  Vec m;
  Vec v;
  std::uint64_t t = 0;
  AdamConfig config;

  static AdamState fresh(std::size_t dim, const AdamConfig& config);
};

// One bias-corrected Adam step, in place on `params` and `state`.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
               Direction direction);

}  // namespace fedvar
