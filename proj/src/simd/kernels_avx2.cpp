// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "fastpoint/simd/kernels.hpp"

namespace fastpoint::simd::detail {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// 4 rows x 8 columns of C held in registers across the whole k loop.
inline void gemm_block_4x8(std::size_t k, const double* a, std::size_t lda, const double* b,
                           std::size_t ldb, double* c, std::size_t ldc) {
  __m256d c00 = _mm256_loadu_pd(c);
  __m256d c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc);
  __m256d c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc);
  __m256d c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc);
  __m256d c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const double* b_row = b + p * ldb;
    const __m256d b0 = _mm256_loadu_pd(b_row);
    const __m256d b1 = _mm256_loadu_pd(b_row + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

inline void gemm_block_1x8(std::size_t k, const double* a, const double* b, std::size_t ldb,
                           double* c) {
  __m256d c0 = _mm256_loadu_pd(c);
  __m256d c1 = _mm256_loadu_pd(c + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const double* b_row = b + p * ldb;
    const __m256d av = _mm256_broadcast_sd(a + p);
    c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row), c0);
    c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row + 4), c1);
  }
  _mm256_storeu_pd(c, c0);
  _mm256_storeu_pd(c + 4, c1);
}

inline void gemm_block_1x4(std::size_t k, const double* a, const double* b, std::size_t ldb,
                           double* c) {
  __m256d c0 = _mm256_loadu_pd(c);
  for (std::size_t p = 0; p < k; ++p) {
    c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + p * ldb), c0);
  }
  _mm256_storeu_pd(c, c0);
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd();
  __m256d s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  }
  double sum = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  const std::size_t n8 = n - n % 8;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    for (std::size_t j = 0; j < n8; j += 8) {
      gemm_block_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc);
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n8; j += 8) gemm_block_1x8(k, a + i * lda, b + j, ldb, c + i * ldc + j);
  }
  if (n8 == n) return;
  // Column tail for every row.
  std::size_t j = n8;
  if (j + 4 <= n) {
    for (std::size_t r = 0; r < m; ++r) gemm_block_1x4(k, a + r * lda, b + j, ldb, c + r * ldc + j);
    j += 4;
  }
  for (; j < n; ++j) {
    for (std::size_t r = 0; r < m; ++r) {
      double acc = c[r * ldc + j];
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[r * lda + p], b[p * ldb + j], acc);
      c[r * ldc + j] = acc;
    }
  }
}

void box_mask_avx2(const Point* points, std::size_t n, const BoxMaskParams& params,
                   std::uint8_t* mask) {
  const __m256d cx = _mm256_set1_pd(params.cx);
  const __m256d cy = _mm256_set1_pd(params.cy);
  const __m256d cz = _mm256_set1_pd(params.cz);
  const __m256d ct = _mm256_set1_pd(params.cos_t);
  const __m256d st = _mm256_set1_pd(params.sin_t);
  const __m256d hl = _mm256_set1_pd(params.half_l);
  const __m256d hw = _mm256_set1_pd(params.half_w);
  const __m256d hh = _mm256_set1_pd(params.half_h);
  const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));

  const double* raw = &points[0].x;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p0 = _mm256_loadu_pd(raw + 4 * i);
    const __m256d p1 = _mm256_loadu_pd(raw + 4 * i + 4);
    const __m256d p2 = _mm256_loadu_pd(raw + 4 * i + 8);
    const __m256d p3 = _mm256_loadu_pd(raw + 4 * i + 12);
    // 4x4 transpose of (x, y, z, r) records.
    const __m256d t0 = _mm256_unpacklo_pd(p0, p1);  // x0 x1 z0 z1
    const __m256d t1 = _mm256_unpackhi_pd(p0, p1);  // y0 y1 r0 r1
    const __m256d t2 = _mm256_unpacklo_pd(p2, p3);  // x2 x3 z2 z3
    const __m256d t3 = _mm256_unpackhi_pd(p2, p3);  // y2 y3 r2 r3
    const __m256d x = _mm256_permute2f128_pd(t0, t2, 0x20);
    const __m256d z = _mm256_permute2f128_pd(t0, t2, 0x31);
    const __m256d y = _mm256_permute2f128_pd(t1, t3, 0x20);

    // Same operation order as the scalar reference, no contraction.
    const __m256d dx = _mm256_sub_pd(x, cx);
    const __m256d dy = _mm256_sub_pd(y, cy);
    const __m256d u = _mm256_add_pd(_mm256_mul_pd(dx, ct), _mm256_mul_pd(dy, st));
    const __m256d v = _mm256_sub_pd(_mm256_mul_pd(dy, ct), _mm256_mul_pd(dx, st));
    const __m256d w = _mm256_sub_pd(z, cz);

    const __m256d in_u = _mm256_cmp_pd(_mm256_and_pd(u, abs_mask), hl, _CMP_LE_OQ);
    const __m256d in_v = _mm256_cmp_pd(_mm256_and_pd(v, abs_mask), hw, _CMP_LE_OQ);
    const __m256d in_w = _mm256_cmp_pd(_mm256_and_pd(w, abs_mask), hh, _CMP_LE_OQ);
    const int bits = _mm256_movemask_pd(_mm256_and_pd(_mm256_and_pd(in_u, in_v), in_w));
    mask[i] = static_cast<std::uint8_t>(bits & 1);
    mask[i + 1] = static_cast<std::uint8_t>((bits >> 1) & 1);
    mask[i + 2] = static_cast<std::uint8_t>((bits >> 2) & 1);
    mask[i + 3] = static_cast<std::uint8_t>((bits >> 3) & 1);
  }
  if (i < n) box_mask_scalar(points + i, n - i, params, mask + i);
}

}  // namespace fastpoint::simd::detail
