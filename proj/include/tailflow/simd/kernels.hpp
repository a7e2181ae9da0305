#pragma once
// Dense double-precision inner loops used by the autodiff engine.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA variant compiled in its own translation unit. The variant is
// selected once at runtime from CPUID; the TAILFLOW_ISA environment variable
// (`scalar` or `avx2`) overrides the choice. Results of the two variants agree
// to rounding (FMA contraction and reassociated sums), see test_simd.cpp.

#include <cstddef>
#include <string_view>

namespace tailflow::simd {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  /// C[m x n] (+)= A[m x k] * B[k x n]; all row-major and contiguous.
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  /// C[m x n] (+)= A^T * B with A stored as [k x m].
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  /// C[m x n] (+)= A * B^T with B stored as [n x k].
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// out = x + y
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  /// out = x * y
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  /// y += x * w  (elementwise multiply-accumulate)
  void (*mul_acc)(const double* x, const double* w, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
};

bool isa_supported(Isa isa) noexcept;

/// Kernel table for a specific ISA. Requesting an unsupported ISA returns the
/// scalar table.
const KernelTable& kernels_for(Isa isa) noexcept;

/// Active kernel table; resolved on first use.
const KernelTable& kernels() noexcept;

namespace detail {
const KernelTable& scalar_table() noexcept;
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table() noexcept;
#endif
}  // namespace detail

}  // namespace tailflow::simd
