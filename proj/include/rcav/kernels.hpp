#pragma once

// Data-parallel inner loops. Every routine has a scalar reference
// implementation; vector variants (AVX2+FMA on x86-64, NEON on aarch64) are
// compiled in separate translation units and picked once at startup. The
// equivalence tests in tests/test_kernels.cpp hold the variants to the
// scalar reference.

#include <cassert>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace rcav::kernels {

struct KernelTable {
  const char* name;
  // sum_i a[i]*b[i]
  float (*dot)(const float* a, const float* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  // sum_i x[i]^2, accumulated in double
  double (*sum_squares)(const float* x, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n], contiguous row-major
  void (*gemm_acc)(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);
  // y = max(x, 0)
  void (*relu)(const float* x, float* y, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// All tables usable on this machine, scalar first.
std::vector<const KernelTable*> available_tables();

// The table used by the library. Chosen on first use: RCAV_KERNELS=scalar|avx2|neon
// forces a variant, otherwise the widest supported one wins.
const KernelTable& active();

inline float dot(const float* a, const float* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(float alpha, const float* x, float* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline double sum_squares(const float* x, std::size_t n) { return active().sum_squares(x, n); }
inline void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  active().gemm_acc(m, n, k, a, b, c);
}
inline void relu(const float* x, float* y, std::size_t n) { active().relu(x, y, n); }

inline float dot(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  return dot(a.data(), b.data(), a.size());
}
inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  assert(x.size() == y.size());
  axpy(alpha, x.data(), y.data(), x.size());
}
inline double sum_squares(std::span<const float> x) { return sum_squares(x.data(), x.size()); }

}  // namespace rcav::kernels
