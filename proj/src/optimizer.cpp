// SPDX-License-Identifier: Apache-2.0
#include "fedvar/optimizer.hpp"

#include <cmath>

#include "fedvar/error.hpp"
#include "fedvar/kernels.hpp"

namespace fedvar {

void AdamConfig::validate() const {
  if (!(lr > 0.0 && std::isfinite(lr))) throw ConfigError("adam: lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must lie in (0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

AdamState AdamState::fresh(std::size_t dim, const AdamConfig& config) {
  return {Vec(dim, 0.0), Vec(dim, 0.0), 0, config};
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
               Direction direction) {
  require_dims(params.size() == grad.size() && state.m.size() == params.size() &&
                   state.v.size() == params.size(),
               "adam: parameter, gradient and state sizes differ");
  state.t += 1;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.t);
  const kernels::AdamCoeffs k{
      c.beta1,
      c.beta2,
      1.0 - c.beta1,
      1.0 - c.beta2,
      1.0 / (1.0 - std::pow(c.beta1, t)),
      1.0 / (1.0 - std::pow(c.beta2, t)),
      direction == Direction::ascend ? c.lr : -c.lr,
      c.eps,
  };
  kernels::adam_update(params, state.m, state.v, grad, k);
}

}  // namespace fedvar
