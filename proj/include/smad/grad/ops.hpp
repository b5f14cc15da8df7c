#pragma once

#include <array>
#include <cstddef>

#include "smad/grad/tape.hpp"

namespace smad::grad {

struct Conv3dParams {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
};

struct ConvTranspose2dParams {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// input [N, Ci, X, Y, Z], weight [Co, Ci, kx, ky, kz] -> [N, Co, X', Y', Z']
Shape conv3d_output_shape(const Shape& input, const Shape& weight, const Conv3dParams& p);
// input [N, Ci, H, W], weight [Ci, Co, k, k] -> [N, Co, (H-1)s - 2p + k, ...]
Shape conv2d_transpose_output_shape(const Shape& input, const Shape& weight, const ConvTranspose2dParams& p);

// Elementwise, identical shapes.
template <typename T> Var add(Tape<T>& tape, Var a, Var b);
template <typename T> Var sub(Tape<T>& tape, Var a, Var b);
template <typename T> Var mul(Tape<T>& tape, Var a, Var b);
template <typename T> Var scale(Tape<T>& tape, Var a, T factor);

// [m, k] x [k, n]
template <typename T> Var matmul(Tape<T>& tape, Var a, Var b);
template <typename T> Var transpose(Tape<T>& tape, Var a);
template <typename T> Var reshape(Tape<T>& tape, Var a, Shape shape);

// x [N, C, ...] + b [C] broadcast over every axis but 1. The only
// broadcasting op.
template <typename T> Var bias_add(Tape<T>& tape, Var x, Var bias);

template <typename T> Var conv3d(Tape<T>& tape, Var input, Var weight, const Conv3dParams& p);
template <typename T> Var conv2d_transpose(Tape<T>& tape, Var input, Var weight, const ConvTranspose2dParams& p);

template <typename T> Var leaky_relu(Tape<T>& tape, Var x, T slope);
template <typename T> Var sigmoid(Tape<T>& tape, Var x);
// Rank-2 softmax along axis 0 or 1.
template <typename T> Var softmax(Tape<T>& tape, Var x, std::size_t axis);

// Scalar reductions, shape [1].
template <typename T> Var sum(Tape<T>& tape, Var x);
template <typename T> Var mean(Tape<T>& tape, Var x);
// Rank-2 mean along `axis`; [r, c] -> [c] for axis 0, [r] for axis 1.
template <typename T> Var mean_axis(Tape<T>& tape, Var x, std::size_t axis);
// mean((pred - target)^2), shape [1].
template <typename T> Var mse(Tape<T>& tape, Var pred, Var target);

}  // namespace smad::grad
