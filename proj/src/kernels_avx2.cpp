// Compiled with -mavx2 -mfma. Nothing here may run before the dispatcher has
// confirmed CPU support.
#include <immintrin.h>

#include <cmath>

#include "kernels_impl.hpp"

namespace rcav::kernels {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

double sum_squares_avx2(const float* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v));
    const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1));
    acc0 = _mm256_fmadd_pd(lo, lo, acc0);
    acc1 = _mm256_fmadd_pd(hi, hi, acc1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
  return acc;
}

void gemm_acc_avx2(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  // Per output element the accumulation runs over p in order, matching the
  // scalar reference up to FMA rounding.
  for (std::size_t i = 0; i < m; ++i) {
    float* ci = c + i * n;
    const float* ai = a + i * k;
    std::size_t j = 0;
    for (; j + 32 <= n; j += 32) {
      __m256 c0 = _mm256_loadu_ps(ci + j);
      __m256 c1 = _mm256_loadu_ps(ci + j + 8);
      __m256 c2 = _mm256_loadu_ps(ci + j + 16);
      __m256 c3 = _mm256_loadu_ps(ci + j + 24);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256 va = _mm256_set1_ps(ai[p]);
        const float* bp = b + p * n + j;
        c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(bp), c0);
        c1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(bp + 8), c1);
        c2 = _mm256_fmadd_ps(va, _mm256_loadu_ps(bp + 16), c2);
        c3 = _mm256_fmadd_ps(va, _mm256_loadu_ps(bp + 24), c3);
      }
      _mm256_storeu_ps(ci + j, c0);
      _mm256_storeu_ps(ci + j + 8, c1);
      _mm256_storeu_ps(ci + j + 16, c2);
      _mm256_storeu_ps(ci + j + 24, c3);
    }
    for (; j + 8 <= n; j += 8) {
      __m256 c0 = _mm256_loadu_ps(ci + j);
      for (std::size_t p = 0; p < k; ++p) {
        c0 = _mm256_fmadd_ps(_mm256_set1_ps(ai[p]), _mm256_loadu_ps(b + p * n + j), c0);
      }
      _mm256_storeu_ps(ci + j, c0);
    }
    for (; j < n; ++j) {
      float acc = ci[j];
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(ai[p], b[p * n + j], acc);
      ci[j] = acc;
    }
  }
}

void relu_avx2(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

}  // namespace

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{"avx2", dot_avx2, axpy_avx2, sum_squares_avx2, gemm_acc_avx2, relu_avx2};
  return table;
}

}  // namespace rcav::kernels
