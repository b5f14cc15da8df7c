#pragma once

// Row-major GEMM variants and im2col/col2im used by the conv primitives.
// Each GEMM accumulates into C; the transposed forms copy the transposed
// operand and run the dispatched SIMD gemm.

#include <array>
#include <cstddef>

namespace smad::grad::linalg {

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

struct Geometry3 {
  std::size_t channels = 0;
  std::array<std::size_t, 3> in{};
  std::array<std::size_t, 3> kernel{};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};

  std::size_t out(std::size_t axis) const { return (in[axis] + 2 * pad[axis] - kernel[axis]) / stride[axis] + 1; }
  std::size_t out_positions() const { return out(0) * out(1) * out(2); }
  std::size_t patch_size() const { return channels * kernel[0] * kernel[1] * kernel[2]; }
};

// cols[patch_size, out_positions] from image[channels, in0, in1, in2]; zero
// padding. `ld` is the distance between rows of cols (0: out_positions), so
// several images can fill adjacent column blocks of one matrix.
template <typename T>
void im2col(const Geometry3& g, const T* image, T* cols, std::size_t ld = 0);
// Adjoint of im2col: image += scatter(cols).
template <typename T>
void col2im(const Geometry3& g, const T* cols, T* image, std::size_t ld = 0);

}  // namespace smad::grad::linalg
