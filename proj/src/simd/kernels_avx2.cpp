// Compiled with -mavx2 -mfma; only reached after a CPUID check.
#include "tailflow/simd/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <vector>

namespace tailflow::simd::detail {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  const __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Shared micro-kernel for the nn/tn products. `a_at(i, p)` addresses A
// through row stride `rs` and column stride `cs`, so one body serves both A
// and A^T.
inline void gemm_strided(const double* a, std::size_t rs, std::size_t cs, const double* b,
                         double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + (i + 0) * rs;
    const double* a1 = a + (i + 1) * rs;
    const double* a2 = a + (i + 2) * rs;
    const double* a3 = a + (i + 3) * rs;
    double* c0 = c + (i + 0) * n;
    double* c1 = c + (i + 1) * n;
    double* c2 = c + (i + 2) * n;
    double* c3 = c + (i + 3) * n;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d r0a = _mm256_loadu_pd(c0 + j), r0b = _mm256_loadu_pd(c0 + j + 4);
      __m256d r1a = _mm256_loadu_pd(c1 + j), r1b = _mm256_loadu_pd(c1 + j + 4);
      __m256d r2a = _mm256_loadu_pd(c2 + j), r2b = _mm256_loadu_pd(c2 + j + 4);
      __m256d r3a = _mm256_loadu_pd(c3 + j), r3b = _mm256_loadu_pd(c3 + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d ba = _mm256_loadu_pd(b + p * n + j);
        const __m256d bb = _mm256_loadu_pd(b + p * n + j + 4);
        const __m256d x0 = _mm256_set1_pd(a0[p * cs]);
        const __m256d x1 = _mm256_set1_pd(a1[p * cs]);
        const __m256d x2 = _mm256_set1_pd(a2[p * cs]);
        const __m256d x3 = _mm256_set1_pd(a3[p * cs]);
        r0a = _mm256_fmadd_pd(x0, ba, r0a);
        r0b = _mm256_fmadd_pd(x0, bb, r0b);
        r1a = _mm256_fmadd_pd(x1, ba, r1a);
        r1b = _mm256_fmadd_pd(x1, bb, r1b);
        r2a = _mm256_fmadd_pd(x2, ba, r2a);
        r2b = _mm256_fmadd_pd(x2, bb, r2b);
        r3a = _mm256_fmadd_pd(x3, ba, r3a);
        r3b = _mm256_fmadd_pd(x3, bb, r3b);
      }
      _mm256_storeu_pd(c0 + j, r0a);
      _mm256_storeu_pd(c0 + j + 4, r0b);
      _mm256_storeu_pd(c1 + j, r1a);
      _mm256_storeu_pd(c1 + j + 4, r1b);
      _mm256_storeu_pd(c2 + j, r2a);
      _mm256_storeu_pd(c2 + j + 4, r2b);
      _mm256_storeu_pd(c3 + j, r3a);
      _mm256_storeu_pd(c3 + j + 4, r3b);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d r0 = _mm256_loadu_pd(c0 + j);
      __m256d r1 = _mm256_loadu_pd(c1 + j);
      __m256d r2 = _mm256_loadu_pd(c2 + j);
      __m256d r3 = _mm256_loadu_pd(c3 + j);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d bv = _mm256_loadu_pd(b + p * n + j);
        r0 = _mm256_fmadd_pd(_mm256_set1_pd(a0[p * cs]), bv, r0);
        r1 = _mm256_fmadd_pd(_mm256_set1_pd(a1[p * cs]), bv, r1);
        r2 = _mm256_fmadd_pd(_mm256_set1_pd(a2[p * cs]), bv, r2);
        r3 = _mm256_fmadd_pd(_mm256_set1_pd(a3[p * cs]), bv, r3);
      }
      _mm256_storeu_pd(c0 + j, r0);
      _mm256_storeu_pd(c1 + j, r1);
      _mm256_storeu_pd(c2 + j, r2);
      _mm256_storeu_pd(c3 + j, r3);
    }
    for (; j < n; ++j) {
      double s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
      for (std::size_t p = 0; p < k; ++p) {
        const double bv = b[p * n + j];
        s0 += a0[p * cs] * bv;
        s1 += a1[p * cs] * bv;
        s2 += a2[p * cs] * bv;
        s3 += a3[p * cs] * bv;
      }
      c0[j] = s0;
      c1[j] = s1;
      c2[j] = s2;
      c3[j] = s3;
    }
  }
  for (; i < m; ++i) {
    const double* ai = a + i * rs;
    double* ci = c + i * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256d r = _mm256_loadu_pd(ci + j);
      for (std::size_t p = 0; p < k; ++p) {
        r = _mm256_fmadd_pd(_mm256_set1_pd(ai[p * cs]), _mm256_loadu_pd(b + p * n + j), r);
      }
      _mm256_storeu_pd(ci + j, r);
    }
    for (; j < n; ++j) {
      double s = ci[j];
      for (std::size_t p = 0; p < k; ++p) s += ai[p * cs] * b[p * n + j];
      ci[j] = s;
    }
  }
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  gemm_strided(a, k, 1, b, c, m, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  gemm_strided(a, 1, m, b, c, m, k, n, accumulate);
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  // Transposing B (n x k, usually small) lets the blocked nn kernel run.
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_strided(a, k, 1, bt.data(), c, m, k, n, accumulate);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_acc(const double* x, const double* w, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(w + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += x[i] * w[i];
}

double sum(const double* x, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_add_pd(s0, _mm256_loadu_pd(x + i));
    s1 = _mm256_add_pd(s1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_add_pd(s0, _mm256_loadu_pd(x + i));
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i];
  return s;
}

constexpr KernelTable kTable{Isa::avx2, gemm_nn, gemm_tn, gemm_nt, dot, axpy,
                             add,       mul,     mul_acc, sum};

}  // namespace

const KernelTable& avx2_table() noexcept { return kTable; }

}  // namespace tailflow::simd::detail
