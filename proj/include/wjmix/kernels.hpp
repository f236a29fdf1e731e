#pragma once

// Row kernels used by every dense loop in the library.
//
// Each instruction set provides the same entry points. Implementations never
// fuse multiply and add, so every variant produces bit-identical results to
// the scalar reference; the SIMD paths only change throughput.

#include <cstddef>
#include <string_view>

namespace wjmix::kernels {

enum class Isa { scalar, avx2, neon };

struct KernelSet {
  Isa isa;
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // z[i] = x[i] + y[i]
  void (*add)(const double* x, const double* y, double* z, std::size_t n);
  // z[i] = x[i] - y[i]
  void (*sub)(const double* x, const double* y, double* z, std::size_t n);
  // z[i] = x[i] * y[i]
  void (*mul)(const double* x, const double* y, double* z, std::size_t n);
  // z[i] += x[i] * y[i]
  void (*mul_acc)(const double* x, const double* y, double* z, std::size_t n);
  // y[i] = a * x[i]
  void (*scale)(double a, const double* x, double* y, std::size_t n);
};

const KernelSet& scalar_kernels();
// nullptr when the ISA was not compiled in.
const KernelSet* avx2_kernels();
const KernelSet* neon_kernels();

bool isa_supported(Isa isa);

// Kernels used by the tensor layer. Chosen on first use: the widest supported
// ISA, unless WJMIX_ISA names another one (scalar, avx2, neon).
const KernelSet& active();

// Overrides the dispatch choice. Throws std::invalid_argument if the ISA is
// not available on this machine.
void set_active(Isa isa);

std::string_view isa_name(Isa isa);
Isa parse_isa(std::string_view name);

}  // namespace wjmix::kernels
