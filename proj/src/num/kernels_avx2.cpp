// Compiled with -mavx2 -mfma; only reached when CPUID reports both.
#include "xlab/num/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace xlab::num::avx2 {
namespace {

inline float hsum(__m256 v) {
  const __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0x55));
  return _mm_cvtss_f32(s);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

float dot_f32(const float* a, const float* b, std::size_t n) {
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
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_f32(float alpha, float* x, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

void scale_f64(double alpha, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

void add_f32(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void add_f64(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

float sum_sq_f32(const float* x, std::size_t n) { return dot_f32(x, x, n); }
double sum_sq_f64(const double* x, std::size_t n) { return dot_f64(x, x, n); }

// Register-blocked GEMM: a 4 x (2 vectors) tile of C stays in registers while
// p runs over k, so every C entry sees the same fma sequence as an axpy loop.
struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t W = 8;
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t W = 4;
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
};

template <class S, std::size_t R, std::size_t NV>
inline void tile(bool ta, std::size_t i, std::size_t j, std::size_t k, const typename S::T* a, std::size_t lda,
                 const typename S::T* b, std::size_t ldb, typename S::T* c, std::size_t ldc) {
  using V = typename S::V;
  V acc[R][NV];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < NV; ++v) acc[r][v] = S::load(c + (i + r) * ldc + j + v * S::W);
  for (std::size_t p = 0; p < k; ++p) {
    const typename S::T* brow = b + p * ldb + j;
    V bv[NV];
    for (std::size_t v = 0; v < NV; ++v) bv[v] = S::load(brow + v * S::W);
    for (std::size_t r = 0; r < R; ++r) {
      const V av = S::set1(ta ? a[p * lda + i + r] : a[(i + r) * lda + p]);
      for (std::size_t v = 0; v < NV; ++v) acc[r][v] = S::fma(av, bv[v], acc[r][v]);
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < NV; ++v) S::store(c + (i + r) * ldc + j + v * S::W, acc[r][v]);
}

template <class S, std::size_t R>
inline void row_block(bool ta, std::size_t i, std::size_t n, std::size_t k, const typename S::T* a,
                      std::size_t lda, const typename S::T* b, std::size_t ldb, typename S::T* c,
                      std::size_t ldc) {
  std::size_t j = 0;
  for (; j + 2 * S::W <= n; j += 2 * S::W) tile<S, R, 2>(ta, i, j, k, a, lda, b, ldb, c, ldc);
  for (; j + S::W <= n; j += S::W) tile<S, R, 1>(ta, i, j, k, a, lda, b, ldb, c, ldc);
  for (; j < n; ++j) {
    for (std::size_t r = 0; r < R; ++r) {
      typename S::T acc = c[(i + r) * ldc + j];
      for (std::size_t p = 0; p < k; ++p) {
        acc = std::fma(ta ? a[p * lda + i + r] : a[(i + r) * lda + p], b[p * ldb + j], acc);
      }
      c[(i + r) * ldc + j] = acc;
    }
  }
}

template <class S>
void gemm(bool ta, std::size_t m, std::size_t n, std::size_t k, const typename S::T* a, std::size_t lda,
          const typename S::T* b, std::size_t ldb, typename S::T* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) row_block<S, 4>(ta, i, n, k, a, lda, b, ldb, c, ldc);
  for (; i < m; ++i) row_block<S, 1>(ta, i, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_f32(bool ta, std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
              const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  gemm<F32>(ta, m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_f64(bool ta, std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  gemm<F64>(ta, m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace

template <>
const KernelTable<float>& table<float>() {
  static const KernelTable<float> t{&dot_f32, &axpy_f32, &scale_f32, &add_f32, &sum_sq_f32, &gemm_f32};
  return t;
}

template <>
const KernelTable<double>& table<double>() {
  static const KernelTable<double> t{&dot_f64, &axpy_f64, &scale_f64, &add_f64, &sum_sq_f64, &gemm_f64};
  return t;
}

}  // namespace xlab::num::avx2
