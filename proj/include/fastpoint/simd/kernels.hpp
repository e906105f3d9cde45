// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Data-parallel inner loops. Every kernel has a scalar reference
/// implementation; vector variants are selected once at runtime from the CPU
/// feature set and must agree with the reference (exactly for the
/// containment kernel, to rounding for the arithmetic ones).
///
/// Set FASTPOINT_SIMD=scalar in the environment to force the reference path.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "fastpoint/point_cloud.hpp"

namespace fastpoint::simd {

enum class Isa {
  kScalar,
  kAvx2,
};

std::string_view isa_name(Isa isa);

/// Oriented-box containment test parameters. A point is inside when its
/// canonized coordinates satisfy |u| <= half_l, |v| <= half_w, |z - cz| <= half_h.
struct BoxMaskParams {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double cos_t = 1.0;
  double sin_t = 0.0;
  double half_l = 0.0;
  double half_w = 0.0;
  double half_h = 0.0;
};

struct KernelTable {
  Isa isa = Isa::kScalar;

  /// sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n) = nullptr;

  /// y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n) = nullptr;

  /// C[m x n] += A[m x k] * B[k x n], row-major with leading dimensions.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc) = nullptr;

  /// mask[i] = 1 if points[i] is inside the box, else 0.
  void (*box_mask)(const Point* points, std::size_t n, const BoxMaskParams& params,
                   std::uint8_t* mask) = nullptr;
};

bool isa_supported(Isa isa);

/// Kernel table for a specific ISA. Throws std::invalid_argument when the
/// CPU or the build does not support it.
const KernelTable& kernels_for(Isa isa);

/// Currently active kernel table.
const KernelTable& kernels();

Isa active_isa();

/// Override the runtime choice (tests and benchmarks).
void set_active_isa(Isa isa);

/// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);

/// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc);
void box_mask_scalar(const Point* points, std::size_t n, const BoxMaskParams& params,
                     std::uint8_t* mask);

#if defined(FASTPOINT_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
void box_mask_avx2(const Point* points, std::size_t n, const BoxMaskParams& params,
                   std::uint8_t* mask);
#endif

}  // namespace detail

}  // namespace fastpoint::simd
