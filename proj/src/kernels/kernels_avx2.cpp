// Compiled with -mavx2 -mfma. Only reached through the dispatch table after
// a runtime CPU check.

#include "kernels_impl.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace lgtok::kernels::avx2 {

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

// crow[0:n] += av * brow[0:n]
inline void row_axpy(float av, const float* brow, float* crow, std::size_t n) {
  const __m256 va = _mm256_set1_ps(av);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256 c = _mm256_loadu_ps(crow + j);
    c = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c);
    _mm256_storeu_ps(crow + j, c);
  }
  for (; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
}

// C[i, :] (+)= sum_p A(i, p) * b[p, :]; A(i, p) = a[i * ai + p * ap].
// 32-column panels stay in registers across the whole reduction.
void gemm_panel(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t ai, std::size_t ap,
                const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * ai;
    float* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + 32 <= n; j += 32) {
      __m256 c0, c1, c2, c3;
      if (accumulate) {
        c0 = _mm256_loadu_ps(crow + j);
        c1 = _mm256_loadu_ps(crow + j + 8);
        c2 = _mm256_loadu_ps(crow + j + 16);
        c3 = _mm256_loadu_ps(crow + j + 24);
      } else {
        c0 = c1 = c2 = c3 = _mm256_setzero_ps();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const __m256 va = _mm256_set1_ps(arow[p * ap]);
        const float* brow = b + p * ldb + j;
        c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow), c0);
        c1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + 8), c1);
        c2 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + 16), c2);
        c3 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + 24), c3);
      }
      _mm256_storeu_ps(crow + j, c0);
      _mm256_storeu_ps(crow + j + 8, c1);
      _mm256_storeu_ps(crow + j + 16, c2);
      _mm256_storeu_ps(crow + j + 24, c3);
    }
    for (; j + 8 <= n; j += 8) {
      __m256 c0 = accumulate ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; ++p) {
        c0 = _mm256_fmadd_ps(_mm256_set1_ps(arow[p * ap]), _mm256_loadu_ps(b + p * ldb + j), c0);
      }
      _mm256_storeu_ps(crow + j, c0);
    }
    for (; j < n; ++j) {
      float s = accumulate ? crow[j] : 0.0f;
      for (std::size_t p = 0; p < k; ++p) s = std::fma(arow[p * ap], b[p * ldb + j], s);
      crow[j] = s;
    }
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
             const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  gemm_panel(m, n, k, a, lda, 1, b, ldb, c, ldc, accumulate);
}

float dot(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float s = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
             const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  // Pack B^T once; per-element dot products are slow for short reductions.
  thread_local std::vector<float> packed;
  packed.resize(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) packed[p * n + j] = b[j * ldb + p];
  }
  gemm_panel(m, n, k, a, lda, 1, packed.data(), n, c, ldc, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
             const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  gemm_panel(m, n, k, a, 1, lda, b, ldb, c, ldc, accumulate);
}

void axpy(float alpha, const float* x, float* y, std::size_t n) { row_axpy(alpha, x, y, n); }

float squared_distance(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc = _mm256_fmadd_ps(d, d, acc);
  }
  float s = hsum(acc);
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    s = std::fma(d, d, s);
  }
  return s;
}

}  // namespace lgtok::kernels::avx2
