// SPDX-License-Identifier: Apache-2.0
#include "fedvar/kernels.hpp"

#include <cmath>

namespace fedvar::kernels::scalar {

// Left-to-right accumulation. This is the reference summation order.
double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void scale_add(const double* a, double alpha, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + alpha * b[i];
}

// Operation order here is mirrored exactly by the SIMD variants.
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 const AdamCoeffs& c) {
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    const double mi = c.beta1 * m[i] + c.one_minus_beta1 * gi;
    const double vi = c.beta2 * v[i] + (c.one_minus_beta2 * gi) * gi;
    m[i] = mi;
    v[i] = vi;
    const double mhat = mi * c.bias1;
    const double vhat = vi * c.bias2;
    p[i] = p[i] + (c.signed_lr * mhat) / (std::sqrt(vhat) + c.eps);
  }
}

}  // namespace fedvar::kernels::scalar
