// Compiled with -mavx2 -mfma; only reached when cpuid reports both.
#include <immintrin.h>

#include "smad/simd/kernels.hpp"

namespace smad::simd::avx2 {

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

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

}  // namespace

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
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot(const double* a, const double* b, std::size_t n) {
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

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

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
    s += d * d;
  }
  return s;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace smad::simd::avx2

namespace smad::simd::avx2 {

namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t kLanes = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V splat(T x) { return _mm256_set1_ps(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static __m256i mask(std::size_t n) {
    alignas(32) static const int table[16] = {-1, -1, -1, -1, -1, -1, -1, -1, 0, 0, 0, 0, 0, 0, 0, 0};
    return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + 8 - n));
  }
  static V load(const T* p, __m256i m) { return _mm256_maskload_ps(p, m); }
  static void store(T* p, __m256i m, V v) { _mm256_maskstore_ps(p, m, v); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t kLanes = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V splat(T x) { return _mm256_set1_pd(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static __m256i mask(std::size_t n) {
    alignas(32) static const long long table[8] = {-1, -1, -1, -1, 0, 0, 0, 0};
    return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + 4 - n));
  }
  static V load(const T* p, __m256i m) { return _mm256_maskload_pd(p, m); }
  static void store(T* p, __m256i m, V v) { _mm256_maskstore_pd(p, m, v); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
};

// R rows x two vectors of C, accumulated over all of k.
template <typename K, std::size_t R>
void block(std::size_t w, std::size_t k, std::size_t lda, std::size_t ldb, std::size_t ldc, const typename K::T* a,
           const typename K::T* b, typename K::T* c) {
  using V = typename K::V;
  constexpr std::size_t L = K::kLanes;
  const __m256i m0 = K::mask(w < L ? w : L);
  const __m256i m1 = K::mask(w > L ? w - L : 0);
  V acc[R][2];
  for (std::size_t r = 0; r < R; ++r) acc[r][0] = acc[r][1] = K::zero();
  for (std::size_t p = 0; p < k; ++p) {
    const V b0 = K::load(b + p * ldb, m0);
    const V b1 = K::load(b + p * ldb + L, m1);
    for (std::size_t r = 0; r < R; ++r) {
      const V av = K::splat(a[r * lda + p]);
      acc[r][0] = K::fma(av, b0, acc[r][0]);
      acc[r][1] = K::fma(av, b1, acc[r][1]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    typename K::T* cr = c + r * ldc;
    K::store(cr, m0, K::add(K::load(cr, m0), acc[r][0]));
    K::store(cr + L, m1, K::add(K::load(cr + L, m1), acc[r][1]));
  }
}

template <typename K>
void gemm_impl(std::size_t m, std::size_t n, std::size_t k, const typename K::T* a, const typename K::T* b,
               typename K::T* c) {
  constexpr std::size_t W = 2 * K::kLanes;
  for (std::size_t j = 0; j < n; j += W) {
    const std::size_t w = n - j < W ? n - j : W;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) block<K, 4>(w, k, k, n, n, a + i * k, b + j, c + i * n + j);
    switch (m - i) {
      case 3: block<K, 3>(w, k, k, n, n, a + i * k, b + j, c + i * n + j); break;
      case 2: block<K, 2>(w, k, k, n, n, a + i * k, b + j, c + i * n + j); break;
      case 1: block<K, 1>(w, k, k, n, n, a + i * k, b + j, c + i * n + j); break;
      default: break;
    }
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  gemm_impl<F32>(m, n, k, a, b, c);
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  gemm_impl<F64>(m, n, k, a, b, c);
}

}  // namespace smad::simd::avx2
