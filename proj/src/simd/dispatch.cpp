#include <cstdlib>
#include <string_view>

#include "tailflow/simd/kernels.hpp"

namespace tailflow::simd {

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) noexcept {
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::avx2 && isa_supported(Isa::avx2)) return detail::avx2_table();
#endif
  (void)isa;
  return detail::scalar_table();
}

namespace {

Isa resolve_isa() noexcept {
  if (const char* env = std::getenv("TAILFLOW_ISA")) {
    const std::string_view want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
  }
  return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

}  // namespace

const KernelTable& kernels() noexcept {
  static const KernelTable& table = kernels_for(resolve_isa());
  return table;
}

}  // namespace tailflow::simd
