#pragma once

// Data-parallel inner loops shared by the autodiff GEMM/conv code and the
// RBF kernel. Each kernel has a scalar reference and an AVX2+FMA variant;
// the variant is picked once from cpuid and can be pinned for testing.

#include <cstddef>
#include <span>

namespace smad::simd {

enum class Isa { Scalar, Avx2 };

const char* isa_name(Isa isa);

// Best instruction set the running CPU supports.
Isa detected_isa();

// Instruction set the dispatching entry points currently use.
Isa active_isa();

// Pins dispatch to `isa`, clamped to what the CPU supports. Returns the
// previously active value.
Isa set_active_isa(Isa isa);

class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(set_active_isa(isa)) {}
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

namespace scalar {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
float squared_distance(const float* a, const float* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
}  // namespace scalar

namespace avx2 {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
float squared_distance(const float* a, const float* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
}  // namespace avx2

// Dispatching entry points.
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
float squared_distance(const float* a, const float* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
// C[m x n] += A[m x k] * B[k x n], all row-major and dense.
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  return dot(a.data(), b.data(), a.size());
}

template <typename T>
T squared_distance(std::span<const T> a, std::span<const T> b) {
  return squared_distance(a.data(), b.data(), a.size());
}

}  // namespace smad::simd
