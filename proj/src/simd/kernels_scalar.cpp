#include "smad/simd/kernels.hpp"

namespace smad::simd::scalar {

namespace {

template <typename T>
T dot_impl(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy_impl(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T sqdist_impl(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

float dot(const float* a, const float* b, std::size_t n) { return dot_impl(a, b, n); }
double dot(const double* a, const double* b, std::size_t n) { return dot_impl(a, b, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) { axpy_impl(alpha, x, y, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { axpy_impl(alpha, x, y, n); }
float squared_distance(const float* a, const float* b, std::size_t n) {
  return sqdist_impl(a, b, n);
}
double squared_distance(const double* a, const double* b, std::size_t n) {
  return sqdist_impl(a, b, n);
}

}  // namespace smad::simd::scalar

namespace smad::simd::scalar {

namespace {

template <typename T>
void gemm_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  gemm_impl(m, n, k, a, b, c);
}
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  gemm_impl(m, n, k, a, b, c);
}

}  // namespace smad::simd::scalar
