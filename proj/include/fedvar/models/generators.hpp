// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "fedvar/data.hpp"
#include "fedvar/rng.hpp"

namespace fedvar {

// Gaussian-blob classification with K class means on a circle of radius
// `separation` in the first two coordinates (remaining coordinates zero)
// and unit isotropic noise. Silo j draws round(skew * N_j) points from its
// dominant class j mod K and the rest uniformly from the other classes.
// Global indices are assigned silo by silo. Class means depend only on K, d
// and `separation`, so training and test sets from different keys share them.
Dataset gen_heterogeneous_classification(const RngKey& key, std::size_t J, std::size_t N_j,
                                         std::size_t d, std::size_t K, double skew,
                                         double separation = 2.5);

// Per-silo test sets with `per_class` points of every class.
Dataset gen_balanced_classification(const RngKey& key, std::size_t J, std::size_t per_class,
                                    std::size_t d, std::size_t K, double separation = 2.5);

// Draws Z_G, then one Z_L and one y per unit, from the conjugate model.
std::vector<Unit> gen_conjugate(const RngKey& key, std::size_t N, double tau, double lambda,
                                double noise);

struct GlmmTruth {
  double beta[4] = {-1.2, 0.3, -0.15, 0.05};
  double omega = -0.7;  // random-intercept sd is exp(-omega)
  double smoke_rate = 0.35;
};

// Synthetic stand-in for the wheeze study: `subjects` children with four
// annual visits at centred ages -2..1 and a binary maternal-smoking flag.
std::vector<Unit> gen_glmm(const RngKey& key, std::size_t subjects = 537,
                           const GlmmTruth& truth = {});

// Softmax regression data: W ~ N(0, w_scale^2), b ~ N(0, 1), x ~ N(0, I).
std::vector<Unit> gen_multinom(const RngKey& key, std::size_t N, std::size_t d, std::size_t K,
                               double w_scale = 1.0);

}  // namespace fedvar
