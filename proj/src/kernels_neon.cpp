#include <arm_neon.h>

#include <cmath>

#include "kernels_impl.hpp"

namespace rcav::kernels {

namespace {

float dot_neon(const float* a, const float* b, std::size_t n) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
  }
  float acc = vaddvq_f32(vaddq_f32(acc0, acc1));
  for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

void axpy_neon(float alpha, const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_n_f32(vld1q_f32(y + i), vld1q_f32(x + i), alpha));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

double sum_squares_neon(const float* x, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    const float64x2_t lo = vcvt_f64_f32(vget_low_f32(v));
    const float64x2_t hi = vcvt_high_f64_f32(v);
    acc0 = vfmaq_f64(acc0, lo, lo);
    acc1 = vfmaq_f64(acc1, hi, hi);
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
  return acc;
}

void gemm_acc_neon(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    float* ci = c + i * n;
    const float* ai = a + i * k;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      float32x4_t c0 = vld1q_f32(ci + j);
      float32x4_t c1 = vld1q_f32(ci + j + 4);
      float32x4_t c2 = vld1q_f32(ci + j + 8);
      float32x4_t c3 = vld1q_f32(ci + j + 12);
      for (std::size_t p = 0; p < k; ++p) {
        const float* bp = b + p * n + j;
        c0 = vfmaq_n_f32(c0, vld1q_f32(bp), ai[p]);
        c1 = vfmaq_n_f32(c1, vld1q_f32(bp + 4), ai[p]);
        c2 = vfmaq_n_f32(c2, vld1q_f32(bp + 8), ai[p]);
        c3 = vfmaq_n_f32(c3, vld1q_f32(bp + 12), ai[p]);
      }
      vst1q_f32(ci + j, c0);
      vst1q_f32(ci + j + 4, c1);
      vst1q_f32(ci + j + 8, c2);
      vst1q_f32(ci + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
      float32x4_t c0 = vld1q_f32(ci + j);
      for (std::size_t p = 0; p < k; ++p) c0 = vfmaq_n_f32(c0, vld1q_f32(b + p * n + j), ai[p]);
      vst1q_f32(ci + j, c0);
    }
    for (; j < n; ++j) {
      float acc = ci[j];
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(ai[p], b[p * n + j], acc);
      ci[j] = acc;
    }
  }
}

void relu_neon(const float* x, float* y, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmaxq_f32(vld1q_f32(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

}  // namespace

const KernelTable& neon_table_unchecked() {
  static const KernelTable table{"neon", dot_neon, axpy_neon, sum_squares_neon, gemm_acc_neon, relu_neon};
  return table;
}

}  // namespace rcav::kernels
