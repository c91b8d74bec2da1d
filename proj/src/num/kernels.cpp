#include "xlab/num/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace xlab::num {
namespace {

SimdLevel initial_level() {
  SimdLevel level = detected_simd();
  if (const char* env = std::getenv("XLAB_SIMD")) {
    const std::string v(env);
    if (v == "scalar") {
      level = SimdLevel::scalar;
    } else if (v == "avx2" && detected_simd() == SimdLevel::avx2) {
      level = SimdLevel::avx2;
    }
  }
  return level;
}

std::atomic<SimdLevel>& level_slot() {
  static std::atomic<SimdLevel> slot{initial_level()};
  return slot;
}

}  // namespace

std::string_view to_string(SimdLevel level) {
  return level == SimdLevel::avx2 ? "avx2" : "scalar";
}

SimdLevel detected_simd() {
#if defined(XLAB_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  if (ok) return SimdLevel::avx2;
#endif
  return SimdLevel::scalar;
}

SimdLevel active_simd() { return level_slot().load(std::memory_order_relaxed); }

void set_simd(SimdLevel level) {
  if (level == SimdLevel::avx2 && detected_simd() != SimdLevel::avx2) {
    throw std::invalid_argument("AVX2+FMA kernels requested but not supported by this CPU");
  }
  level_slot().store(level, std::memory_order_relaxed);
}

template <class T>
const KernelTable<T>& kernels_for(SimdLevel level) {
#ifdef XLAB_HAVE_AVX2_KERNELS
  if (level == SimdLevel::avx2) return avx2::table<T>();
#endif
  (void)level;
  return scalar::table<T>();
}

template const KernelTable<float>& kernels_for<float>(SimdLevel);
template const KernelTable<double>& kernels_for<double>(SimdLevel);

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc) {
  kernels<T>().gemm(false, m, n, k, a, lda, b, ldb, c, ldc);
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc) {
  // Pack B^T once so the blocked kernel streams contiguous rows.
  thread_local std::vector<T> packed;
  packed.resize(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    const T* brow = b + j * ldb;
    for (std::size_t p = 0; p < k; ++p) packed[p * n + j] = brow[p];
  }
  kernels<T>().gemm(false, m, n, k, a, lda, packed.data(), n, c, ldc);
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc) {
  kernels<T>().gemm(true, m, n, k, a, lda, b, ldb, c, ldc);
}

#define XLAB_INSTANTIATE_GEMM(T)                                                                  \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*, \
                           std::size_t, T*, std::size_t);                                          \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*, \
                           std::size_t, T*, std::size_t);                                          \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*, \
                           std::size_t, T*, std::size_t);

XLAB_INSTANTIATE_GEMM(float)
XLAB_INSTANTIATE_GEMM(double)

#undef XLAB_INSTANTIATE_GEMM

}  // namespace xlab::num
