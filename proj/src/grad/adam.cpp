#include "smad/grad/adam.hpp"

#include <cmath>

#include "smad/common/error.hpp"

namespace smad::grad {

template <typename T>
AdamState<T> AdamState<T>::for_params(const std::vector<Tensor<T>*>& params) {
  AdamState s;
  for (const auto* p : params) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error("gradtape", ErrorCode::ShapeError, "adam: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k]->shape() != params[k]->shape() || state.m[k].shape() != params[k]->shape()) {
      throw Error("gradtape", ErrorCode::ShapeError,
                  "adam: shape mismatch at parameter " + std::to_string(k) + ": " +
                      shape_string(params[k]->shape()) + " vs " + shape_string(grads[k]->shape()));
    }
    if (!grads[k]->all_finite()) {
      throw Error("gradtape", ErrorCode::NonFiniteGradient,
                  "adam: non-finite gradient for parameter " + std::to_string(k));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(cfg.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    T* p = params[k]->data();
    const T* g = grads[k]->data();
    T* m = state.m[k].data();
    T* v = state.v[k].data();
    for (std::size_t i = 0; i < params[k]->size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(const std::vector<Tensor<float>*>&, const std::vector<const Tensor<float>*>&,
                               AdamState<float>&, const AdamConfig&);
template void adam_step<double>(const std::vector<Tensor<double>*>&, const std::vector<const Tensor<double>*>&,
                                AdamState<double>&, const AdamConfig&);

}  // namespace smad::grad
