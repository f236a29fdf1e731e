#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "wjmix/kernels.hpp"

namespace wjmix::kernels {
namespace {

const KernelSet* lookup(Isa isa) {
  switch (isa) {
    case Isa::scalar: return &scalar_kernels();
    case Isa::avx2: return avx2_kernels();
    case Isa::neon: return neon_kernels();
  }
  return nullptr;
}

const KernelSet* detect() {
  if (const char* env = std::getenv("WJMIX_ISA"); env != nullptr && *env != '\0') {
    const Isa wanted = parse_isa(env);
    if (!isa_supported(wanted))
      throw std::invalid_argument(std::string("WJMIX_ISA=") + env + " is not supported here");
    return lookup(wanted);
  }
  if (isa_supported(Isa::avx2)) return avx2_kernels();
  if (isa_supported(Isa::neon)) return neon_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelSet*>& slot() {
  static std::atomic<const KernelSet*> current{detect()};
  return current;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return avx2_kernels() != nullptr && __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon: return neon_kernels() != nullptr;
  }
  return false;
}

const KernelSet& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) {
  if (!isa_supported(isa))
    throw std::invalid_argument("kernel ISA " + std::string(isa_name(isa)) + " is not supported here");
  slot().store(lookup(isa), std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "neon") return Isa::neon;
  throw std::invalid_argument("unknown kernel ISA '" + std::string(name) + "'");
}

}  // namespace wjmix::kernels
