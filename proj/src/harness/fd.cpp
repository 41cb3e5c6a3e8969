// SPDX-License-Identifier: Apache-2.0
#include "fedvar/harness/fd.hpp"

#include <algorithm>
#include <cmath>

#include "fedvar/error.hpp"

namespace fedvar {

Vec fd_gradient_oracle(const ScalarFn& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  Vec xp(x.begin(), x.end());
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double up = f(xp);
    xp[i] = x[i] - h;
    const double down = f(xp);
    xp[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("non-finite function value in finite differences");
    }
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  require_dims(a.size() == b.size(), "max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(floor, std::abs(b[i])));
  }
  return worst;
}

}  // namespace fedvar
