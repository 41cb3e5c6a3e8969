// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "fedvar/kernels.hpp"

namespace fedvar::kernels {
namespace {

struct Table {
  Isa isa;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale_add)(const double*, double, const double*, double*, std::size_t);
  void (*adam_update)(double*, double*, double*, const double*, std::size_t, const AdamCoeffs&);
};

constexpr Table kScalar{Isa::scalar, scalar::dot, scalar::axpy, scalar::scale_add,
                        scalar::adam_update};
#if defined(FEDVAR_HAVE_AVX2)
constexpr Table kAvx2{Isa::avx2, avx2::dot, avx2::axpy, avx2::scale_add, avx2::adam_update};
#endif
#if defined(FEDVAR_HAVE_NEON)
constexpr Table kNeon{Isa::neon, neon::dot, neon::axpy, neon::scale_add, neon::adam_update};
#endif

const Table* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &kScalar;
    case Isa::avx2:
#if defined(FEDVAR_HAVE_AVX2)
      return &kAvx2;
#else
      return nullptr;
#endif
    case Isa::neon:
#if defined(FEDVAR_HAVE_NEON)
      return &kNeon;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(FEDVAR_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(FEDVAR_HAVE_NEON)
      return true;  // mandatory on AArch64
#else
      return false;
#endif
  }
  return false;
}

const Table* select_initial() {
  if (const char* env = std::getenv("FEDVAR_ISA")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == isa_name(isa) && isa_supported(isa)) return table_for(isa);
    }
  }
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (isa_supported(isa)) return table_for(isa);
  }
  return &kScalar;
}

std::atomic<const Table*>& active() {
  static std::atomic<const Table*> t{select_initial()};
  return t;
}

void require_same(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("kernel operand length mismatch");
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) noexcept { return table_for(isa) != nullptr && cpu_has(isa); }

Isa active_isa() noexcept { return active().load(std::memory_order_acquire)->isa; }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA not supported here: " + std::string(isa_name(isa)));
  }
  active().store(table_for(isa), std::memory_order_release);
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size());
  return active().load(std::memory_order_acquire)->dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same(x.size(), y.size());
  active().load(std::memory_order_acquire)->axpy(alpha, x.data(), y.data(), x.size());
}

void scale_add(std::span<const double> a, double alpha, std::span<const double> b,
               std::span<double> out) {
  require_same(a.size(), b.size());
  require_same(a.size(), out.size());
  active().load(std::memory_order_acquire)->scale_add(a.data(), alpha, b.data(), out.data(),
                                                      a.size());
}

void adam_update(std::span<double> params, std::span<double> m, std::span<double> v,
                 std::span<const double> grad, const AdamCoeffs& c) {
  require_same(params.size(), m.size());
  require_same(params.size(), v.size());
  require_same(params.size(), grad.size());
  active().load(std::memory_order_acquire)
      ->adam_update(params.data(), m.data(), v.data(), grad.data(), params.size(), c);
}

}  // namespace fedvar::kernels
