#include <atomic>

#include "smad/simd/kernels.hpp"

namespace smad::simd {

namespace {

Isa probe() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::Avx2;
#endif
  return Isa::Scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detected_isa()};
  return isa;
}

}  // namespace

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
  static const Isa isa = probe();
  return isa;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

Isa set_active_isa(Isa isa) {
  if (isa == Isa::Avx2 && detected_isa() != Isa::Avx2) isa = Isa::Scalar;
  return active().exchange(isa, std::memory_order_relaxed);
}

#define SMAD_DISPATCH(call) \
  (active_isa() == Isa::Avx2 ? avx2::call : scalar::call)

float dot(const float* a, const float* b, std::size_t n) { return SMAD_DISPATCH(dot(a, b, n)); }
double dot(const double* a, const double* b, std::size_t n) {
  return SMAD_DISPATCH(dot(a, b, n));
}
void axpy(float alpha, const float* x, float* y, std::size_t n) {
  SMAD_DISPATCH(axpy(alpha, x, y, n));
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  SMAD_DISPATCH(axpy(alpha, x, y, n));
}
float squared_distance(const float* a, const float* b, std::size_t n) {
  return SMAD_DISPATCH(squared_distance(a, b, n));
}
double squared_distance(const double* a, const double* b, std::size_t n) {
  return SMAD_DISPATCH(squared_distance(a, b, n));
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  SMAD_DISPATCH(gemm(m, n, k, a, b, c));
}
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  SMAD_DISPATCH(gemm(m, n, k, a, b, c));
}

#undef SMAD_DISPATCH

}  // namespace smad::simd
