// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "fastpoint/simd/kernels.hpp"

namespace fastpoint::simd {

namespace {

constexpr KernelTable kScalarTable{
    Isa::kScalar, &detail::dot_scalar, &detail::axpy_scalar, &detail::gemm_nn_scalar,
    &detail::box_mask_scalar,
};

#if defined(FASTPOINT_HAVE_AVX2)
constexpr KernelTable kAvx2Table{
    Isa::kAvx2, &detail::dot_avx2, &detail::axpy_avx2, &detail::gemm_nn_avx2,
    &detail::box_mask_avx2,
};
#endif

bool cpu_has_avx2() {
#if defined(FASTPOINT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* choose_default() {
  if (const char* env = std::getenv("FASTPOINT_SIMD")) {
    if (std::string(env) == "scalar") return &kScalarTable;
  }
#if defined(FASTPOINT_HAVE_AVX2)
  if (cpu_has_avx2()) return &kAvx2Table;
#endif
  return &kScalarTable;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{choose_default()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
      return cpu_has_avx2();
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA not supported on this CPU/build: " +
                                std::string(isa_name(isa)));
  }
#if defined(FASTPOINT_HAVE_AVX2)
  if (isa == Isa::kAvx2) return kAvx2Table;
#endif
  return kScalarTable;
}

const KernelTable& kernels() { return *active_slot().load(std::memory_order_acquire); }

Isa active_isa() { return kernels().isa; }

void set_active_isa(Isa isa) { active_slot().store(&kernels_for(isa), std::memory_order_release); }

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  const auto dot = kernels().dot;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += dot(a + i * lda, b + j * ldb, k);
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  const auto axpy = kernels().axpy;
  for (std::size_t p = 0; p < k; ++p) {
    const double* a_row = a + p * lda;
    const double* b_row = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      if (a_row[i] != 0.0) axpy(a_row[i], b_row, c + i * ldc, n);
    }
  }
}

}  // namespace fastpoint::simd
