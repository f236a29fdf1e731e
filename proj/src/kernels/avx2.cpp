// AVX2 row kernels. Compiled with a function-level target attribute so the
// rest of the library stays baseline x86-64; selection happens at runtime.
// Multiply and add stay separate instructions (no FMA) to match the scalar
// rounding exactly.

#include "wjmix/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

#define WJMIX_AVX2 __attribute__((target("avx2")))

namespace wjmix::kernels {
namespace {

WJMIX_AVX2 void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    __m256d y1 = _mm256_loadu_pd(y + i + 4);
    y0 = _mm256_add_pd(y0, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    y1 = _mm256_add_pd(y1, _mm256_mul_pd(va, _mm256_loadu_pd(x + i + 4)));
    _mm256_storeu_pd(y + i, y0);
    _mm256_storeu_pd(y + i + 4, y1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    y0 = _mm256_add_pd(y0, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, y0);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

WJMIX_AVX2 void add(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(z + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) z[i] = x[i] + y[i];
}

WJMIX_AVX2 void sub(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(z + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) z[i] = x[i] - y[i];
}

WJMIX_AVX2 void mul(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

WJMIX_AVX2 void mul_acc(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(z + i, _mm256_add_pd(_mm256_loadu_pd(z + i), p));
  }
  for (; i < n; ++i) z[i] += x[i] * y[i];
}

WJMIX_AVX2 void scale(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = a * x[i];
}

}  // namespace

const KernelSet* avx2_kernels() {
  static const KernelSet set{Isa::avx2, axpy, add, sub, mul, mul_acc, scale};
  return &set;
}

}  // namespace wjmix::kernels

#else

namespace wjmix::kernels {
const KernelSet* avx2_kernels() { return nullptr; }
}  // namespace wjmix::kernels

#endif
