// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "fastpoint/simd/kernels.hpp"

namespace fastpoint::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a[i * lda + p];
      const double* b_row = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

void box_mask_scalar(const Point* points, std::size_t n, const BoxMaskParams& params,
                     std::uint8_t* mask) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = points[i].x - params.cx;
    const double dy = points[i].y - params.cy;
    const double u = dx * params.cos_t + dy * params.sin_t;
    const double v = dy * params.cos_t - dx * params.sin_t;
    const double w = points[i].z - params.cz;
    mask[i] = (std::fabs(u) <= params.half_l && std::fabs(v) <= params.half_w &&
               std::fabs(w) <= params.half_h)
                  ? 1
                  : 0;
  }
}

}  // namespace fastpoint::simd::detail
