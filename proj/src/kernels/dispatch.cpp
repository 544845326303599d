#include "lgtok/kernels.hpp"

#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"

namespace lgtok::kernels {

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar",    scalar::gemm_nn, scalar::gemm_nt,
                                 scalar::gemm_tn, scalar::dot,     scalar::axpy,
                                 scalar::squared_distance};
  return table;
}

const KernelTable* avx2_kernels() {
#if defined(LGTOK_HAVE_AVX2)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  static const KernelTable table{"avx2",    avx2::gemm_nn, avx2::gemm_nt,
                                 avx2::gemm_tn, avx2::dot,     avx2::axpy,
                                 avx2::squared_distance};
  return supported ? &table : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable& select() {
  const char* forced = std::getenv("LGTOK_KERNELS");
  if (forced != nullptr && std::string_view(forced) == "scalar") return scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace lgtok::kernels
