#pragma once

// Central finite-difference checker for scalar functions built on a Tape<double>.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "smad/grad/ops.hpp"

namespace smad::testing {

using LossFn = std::function<grad::Var(grad::Tape<double>&, const std::vector<grad::Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

inline double eval_loss(const LossFn& f, const std::vector<grad::Tensor<double>>& inputs) {
  grad::Tape<double> tape;
  std::vector<grad::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return tape.value(f(tape, vars))[0];
}

// Checks every coordinate when max_coords is 0, otherwise a random sample.
inline GradCheckResult check_gradients(const LossFn& f, std::vector<grad::Tensor<double>> inputs,
                                       std::size_t max_coords = 0, std::uint64_t seed = 1, double h = 1e-4) {
  std::vector<grad::Tensor<double>> analytic;
  {
    grad::Tape<double> tape;
    std::vector<grad::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.parameter(t));
    auto g = tape.backward(f(tape, vars));
    for (auto v : vars) analytic.push_back(g[v]);
  }
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) coords.emplace_back(k, i);
  }
  if (max_coords != 0 && coords.size() > max_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }
  GradCheckResult r;
  for (auto [k, i] : coords) {
    const double orig = inputs[k][i];
    inputs[k][i] = orig + h;
    const double up = eval_loss(f, inputs);
    inputs[k][i] = orig - h;
    const double down = eval_loss(f, inputs);
    inputs[k][i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic[k][i], numeric));
    ++r.checked;
  }
  return r;
}

inline grad::Tensor<double> random_tensor(grad::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  grad::Tensor<double> t(std::move(shape));
  for (double& x : t.flat()) x = dist(rng);
  return t;
}

}  // namespace smad::testing
