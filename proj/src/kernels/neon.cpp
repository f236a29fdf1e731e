// NEON (AArch64) row kernels; two doubles per lane.

#include "wjmix/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace wjmix::kernels {
namespace {

void axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] += a * x[i];
}

void add(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(z + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) z[i] = x[i] + y[i];
}

void sub(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(z + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) z[i] = x[i] - y[i];
}

void mul(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(z + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

void mul_acc(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(z + i, vaddq_f64(vld1q_f64(z + i), vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i))));
  for (; i < n; ++i) z[i] += x[i] * y[i];
}

void scale(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] = a * x[i];
}

}  // namespace

const KernelSet* neon_kernels() {
  static const KernelSet set{Isa::neon, axpy, add, sub, mul, mul_acc, scale};
  return &set;
}

}  // namespace wjmix::kernels

#else

namespace wjmix::kernels {
const KernelSet* neon_kernels() { return nullptr; }
}  // namespace wjmix::kernels

#endif
