#pragma once

// Inner-loop arithmetic kernels. Every kernel has a portable scalar reference
// and an AVX2+FMA variant; the variant is picked once at runtime from CPUID and
// can be pinned with XLAB_SIMD=scalar|avx2 or set_simd(). All higher-level
// numerics (matmul, attention, layer norm) go through this table, so a single
// switch flips the whole engine between the two paths.

#include <cstddef>
#include <string_view>

namespace xlab::num {

enum class SimdLevel { scalar, avx2 };

std::string_view to_string(SimdLevel level);

template <class T>
struct KernelTable {
  T (*dot)(const T* a, const T* b, std::size_t n);
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);  // y += alpha * x
  void (*scale)(T alpha, T* x, std::size_t n);
  void (*add)(const T* x, T* y, std::size_t n);  // y += x
  T (*sum_sq)(const T* x, std::size_t n);
  // C[m,n] += op(A) B with op(A) = A[m,k] or, when trans_a, A[k,m]^T.
  // Each C entry accumulates over k in increasing order.
  void (*gemm)(bool trans_a, std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
               const T* b, std::size_t ldb, T* c, std::size_t ldc);
};

/// Best level this CPU can run.
SimdLevel detected_simd();
SimdLevel active_simd();
/// Throws std::invalid_argument if the CPU cannot run `level`.
void set_simd(SimdLevel level);

template <class T>
const KernelTable<T>& kernels_for(SimdLevel level);

template <class T>
const KernelTable<T>& kernels() {
  return kernels_for<T>(active_simd());
}

namespace scalar {
template <class T>
const KernelTable<T>& table();
}

#if defined(__x86_64__) || defined(_M_X64)
#define XLAB_HAVE_AVX2_KERNELS 1
namespace avx2 {
template <class T>
const KernelTable<T>& table();
}
#endif

// Row-major GEMM helpers with leading dimensions; all accumulate into C.
// Reduction order is fixed by the loop nest, independent of data.

/// C[m,n] += A[m,k] * B[k,n]
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc);

/// C[m,n] += A[m,k] * B[n,k]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc);

/// C[m,n] += A[k,m]^T * B[k,n]
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc);

}  // namespace xlab::num
