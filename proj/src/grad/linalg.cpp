#include "smad/grad/linalg.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

#include "smad/simd/kernels.hpp"

namespace smad::grad::linalg {

namespace {

template <typename T>
std::vector<T>& scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

// dst[cols x rows] = src[rows x cols]^T
template <typename T>
void transpose_into(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t B = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += B) {
    const std::size_t i1 = std::min(rows, i0 + B);
    for (std::size_t j0 = 0; j0 < cols; j0 += B) {
      const std::size_t j1 = std::min(cols, j0 + B);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  simd::gemm(m, n, k, a, b, c);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  // Long rows: dot products beat transposing B.
  if (k >= 256) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += simd::dot(a + i * k, b + j * k, k);
    }
    return;
  }
  auto& bt = scratch<T>();
  bt.resize(k * n);
  transpose_into(n, k, b, bt.data());
  simd::gemm(m, n, k, a, bt.data(), c);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  auto& at = scratch<T>();
  at.resize(m * k);
  transpose_into(k, m, a, at.data());
  simd::gemm(m, n, k, at.data(), b, c);
}

namespace {

// Visits each (patch row, run of outputs along the last axis) pair:
// f(row, first column of the run, base, lo, hi). Positions [lo, hi) of the
// run tap inside the image, at input offset base + p * stride[2].
template <typename F>
void for_each_run(const Geometry3& g, F&& f) {
  const std::size_t o0 = g.out(0), o1 = g.out(1), o2 = g.out(2);
  const auto in0 = static_cast<std::ptrdiff_t>(g.in[0]);
  const auto in1 = static_cast<std::ptrdiff_t>(g.in[1]);
  const auto in2 = static_cast<std::ptrdiff_t>(g.in[2]);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
      for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
        for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2, ++row) {
          // Output positions p2 with 0 <= p2*s + k2 - pad < in2.
          const auto s2 = static_cast<std::ptrdiff_t>(g.stride[2]);
          const auto off2 = static_cast<std::ptrdiff_t>(k2) - static_cast<std::ptrdiff_t>(g.pad[2]);
          std::ptrdiff_t lo = off2 >= 0 ? 0 : (-off2 + s2 - 1) / s2;
          std::ptrdiff_t hi = in2 - off2 <= 0 ? 0 : (in2 - off2 + s2 - 1) / s2;
          hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(o2));
          lo = std::min(lo, hi);
          for (std::size_t p0 = 0; p0 < o0; ++p0) {
            const auto i0 = static_cast<std::ptrdiff_t>(p0 * g.stride[0] + k0) - static_cast<std::ptrdiff_t>(g.pad[0]);
            for (std::size_t p1 = 0; p1 < o1; ++p1) {
              const auto i1 = static_cast<std::ptrdiff_t>(p1 * g.stride[1] + k1) - static_cast<std::ptrdiff_t>(g.pad[1]);
              const bool inside = i0 >= 0 && i0 < in0 && i1 >= 0 && i1 < in1;
              const std::ptrdiff_t base =
                  ((static_cast<std::ptrdiff_t>(c) * in0 + i0) * in1 + i1) * in2 + off2;
              f(row, (p0 * o1 + p1) * o2, base, inside ? lo : 0, inside ? hi : 0);
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void im2col(const Geometry3& g, const T* image, T* cols, std::size_t ld) {
  const std::size_t o2 = g.out(2);
  const std::size_t s2 = g.stride[2];
  if (ld == 0) ld = g.out_positions();
  for_each_run(g, [&](std::size_t row, std::size_t col0, std::ptrdiff_t base, std::ptrdiff_t lo, std::ptrdiff_t hi) {
    T* dst = cols + row * ld + col0;
    for (std::ptrdiff_t p = 0; p < lo; ++p) dst[p] = T(0);
    if (s2 == 1) {
      std::copy(image + base + lo, image + base + hi, dst + lo);
    } else {
      const T* src = image + base;
      for (std::ptrdiff_t p = lo; p < hi; ++p) dst[p] = src[p * static_cast<std::ptrdiff_t>(s2)];
    }
    for (auto p = static_cast<std::size_t>(hi); p < o2; ++p) dst[p] = T(0);
  });
}

template <typename T>
void col2im(const Geometry3& g, const T* cols, T* image, std::size_t ld) {
  const std::size_t s2 = g.stride[2];
  if (ld == 0) ld = g.out_positions();
  for_each_run(g, [&](std::size_t row, std::size_t col0, std::ptrdiff_t base, std::ptrdiff_t lo, std::ptrdiff_t hi) {
    const T* src = cols + row * ld + col0;
    for (std::ptrdiff_t p = lo; p < hi; ++p) image[base + p * static_cast<std::ptrdiff_t>(s2)] += src[p];
  });
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void im2col<float>(const Geometry3&, const float*, float*, std::size_t);
template void im2col<double>(const Geometry3&, const double*, double*, std::size_t);
template void col2im<float>(const Geometry3&, const float*, float*, std::size_t);
template void col2im<double>(const Geometry3&, const double*, double*, std::size_t);

}  // namespace smad::grad::linalg
