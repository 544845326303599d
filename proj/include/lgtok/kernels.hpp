#pragma once

// Dense float kernels behind every arithmetic inner loop of the library.
//
// Each kernel exists as a scalar reference implementation and, on x86-64,
// an AVX2+FMA implementation. The active table is chosen once at startup
// from the CPU feature bits; setting LGTOK_KERNELS=scalar in the
// environment forces the reference path. All matrices are row-major with
// an explicit leading dimension. Summation order over the reduction axis is
// fixed for a given table, so results are bitwise reproducible run to run.

#include <cstddef>
#include <string_view>

namespace lgtok::kernels {

struct KernelTable {
  std::string_view name;

  // C[M,N] (+)= A[M,K] * B[K,N]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const float* a,
                  std::size_t lda, const float* b, std::size_t ldb, float* c,
                  std::size_t ldc, bool accumulate);
  // C[M,N] (+)= A[M,K] * B[N,K]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const float* a,
                  std::size_t lda, const float* b, std::size_t ldb, float* c,
                  std::size_t ldc, bool accumulate);
  // C[M,N] (+)= A[K,M]^T * B[K,N]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const float* a,
                  std::size_t lda, const float* b, std::size_t ldb, float* c,
                  std::size_t ldc, bool accumulate);

  float (*dot)(const float* a, const float* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  // sum_i (a_i - b_i)^2
  float (*squared_distance)(const float* a, const float* b, std::size_t n);
};

const KernelTable& scalar_kernels();

// Null when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_kernels();

// The table selected for this process.
const KernelTable& active();

}  // namespace lgtok::kernels
