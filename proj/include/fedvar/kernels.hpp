// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Data-parallel inner loops. Every kernel has a scalar reference in
// fedvar::kernels::scalar and per-ISA variants; the free functions in
// fedvar::kernels route through a table selected once at startup from CPU
// features (override with FEDVAR_ISA=scalar|avx2|neon or set_isa()).
//
// Elementwise kernels (axpy, scale_add, adam_update) are bitwise identical
// across ISAs. dot() reassociates in the SIMD variants; its order is fixed
// per ISA, so results are deterministic within a process.

namespace fedvar::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;
Isa active_isa() noexcept;
// Throws std::invalid_argument if the ISA is not available on this CPU/build.
void set_isa(Isa isa);

struct AdamCoeffs {
  double beta1;
  double beta2;
  double one_minus_beta1;
  double one_minus_beta2;
  double bias1;    // 1 / (1 - beta1^t)
  double bias2;    // 1 / (1 - beta2^t)
  double signed_lr;  // +lr ascends, -lr descends
  double eps;
};

double dot(std::span<const double> a, std::span<const double> b);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
// out = a + alpha * b
void scale_add(std::span<const double> a, double alpha, std::span<const double> b,
               std::span<double> out);
void adam_update(std::span<double> params, std::span<double> m, std::span<double> v,
                 std::span<const double> grad, const AdamCoeffs& c);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale_add(const double* a, double alpha, const double* b, double* out, std::size_t n);
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 const AdamCoeffs& c);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale_add(const double* a, double alpha, const double* b, double* out, std::size_t n);
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 const AdamCoeffs& c);
}  // namespace avx2

namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale_add(const double* a, double alpha, const double* b, double* out, std::size_t n);
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 const AdamCoeffs& c);
}  // namespace neon

}  // namespace fedvar::kernels
