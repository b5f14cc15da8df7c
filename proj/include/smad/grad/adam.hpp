#pragma once

#include <cstdint>
#include <vector>

#include "smad/grad/tensor.hpp"

namespace smad::grad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers for a fixed list of parameter tensors.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;

  static AdamState for_params(const std::vector<Tensor<T>*>& params);
};

// One bias-corrected Adam update. Throws NonFiniteGradient, leaving params
// and state untouched, if any gradient entry is NaN/Inf.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state, const AdamConfig& cfg);

}  // namespace smad::grad
