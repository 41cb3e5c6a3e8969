// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>

#include "fedvar/linalg.hpp"

namespace fedvar {

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every i.
// Throws NumericalError if any evaluation is non-finite.
Vec fd_gradient_oracle(const ScalarFn& f, std::span<const double> x, double h = 1e-5);

// max_i |a_i - b_i| / max(atol_floor, |b_i|)
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1.0);

}  // namespace fedvar
