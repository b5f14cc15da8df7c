#include "smad/grad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "smad/common/error.hpp"
#include "smad/grad/linalg.hpp"

namespace smad::grad {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error("gradtape", ErrorCode::ShapeError,
              std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw Error("gradtape", ErrorCode::ShapeError,
                std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(s));
  }
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F&& f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

linalg::Geometry3 conv3d_geometry(const Shape& in, const Shape& w, const Conv3dParams& p) {
  linalg::Geometry3 g;
  g.channels = in[1];
  g.in = {in[2], in[3], in[4]};
  g.kernel = {w[2], w[3], w[4]};
  g.stride = p.stride;
  g.pad = p.pad;
  return g;
}

}  // namespace

Shape conv3d_output_shape(const Shape& input, const Shape& weight, const Conv3dParams& p) {
  require_rank("conv3d input", input, 5);
  require_rank("conv3d weight", weight, 5);
  if (input[1] != weight[1]) shape_error("conv3d", input, weight);
  Shape out{input[0], weight[0], 0, 0, 0};
  for (std::size_t a = 0; a < 3; ++a) {
    if (p.stride[a] == 0) throw Error("gradtape", ErrorCode::ShapeError, "conv3d: zero stride");
    if (input[2 + a] + 2 * p.pad[a] < weight[2 + a]) shape_error("conv3d", input, weight);
    out[2 + a] = (input[2 + a] + 2 * p.pad[a] - weight[2 + a]) / p.stride[a] + 1;
  }
  return out;
}

Shape conv2d_transpose_output_shape(const Shape& input, const Shape& weight, const ConvTranspose2dParams& p) {
  require_rank("conv2d_transpose input", input, 4);
  require_rank("conv2d_transpose weight", weight, 4);
  if (input[1] != weight[0] || p.stride == 0) shape_error("conv2d_transpose", input, weight);
  Shape out{input[0], weight[1], 0, 0};
  for (std::size_t a = 0; a < 2; ++a) {
    const std::size_t full = (input[2 + a] - 1) * p.stride + weight[2 + a];
    if (full <= 2 * p.pad) shape_error("conv2d_transpose", input, weight);
    out[2 + a] = full - 2 * p.pad;
  }
  return out;
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& x = tape.value(a);
  const auto& y = tape.value(b);
  if (x.shape() != y.shape()) shape_error("add", x.shape(), y.shape());
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
  const auto& x = tape.value(a);
  const auto& y = tape.value(b);
  if (x.shape() != y.shape()) shape_error("sub", x.shape(), y.shape());
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, map(g, [](T v) { return -v; }));
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const auto& x = tape.value(a);
  const auto& y = tape.value(b);
  if (x.shape() != y.shape()) shape_error("mul", x.shape(), y.shape());
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    const auto& xv = t.value(a);
    const auto& yv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T> d(g.shape());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * yv[i];
      t.accumulate(a, d);
    }
    if (t.requires_grad(b)) {
      Tensor<T> d(g.shape());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * xv[i];
      t.accumulate(b, d);
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T factor) {
  auto out = map(tape.value(a), [factor](T v) { return v * factor; });
  return tape.record(std::move(out), {a}, [a, factor](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, map(g, [factor](T v) { return v * factor; }));
  });
}

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const auto& x = tape.value(a);
  const auto& y = tape.value(b);
  require_rank("matmul", x.shape(), 2);
  require_rank("matmul", y.shape(), 2);
  if (x.dim(1) != y.dim(0)) shape_error("matmul", x.shape(), y.shape());
  const std::size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
  Tensor<T> out({m, n});
  linalg::gemm_nn(m, n, k, x.data(), y.data(), out.data());
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(a)) {
      Tensor<T> da({m, k});
      linalg::gemm_nt(m, k, n, g.data(), t.value(b).data(), da.data());
      t.accumulate(a, da);
    }
    if (t.requires_grad(b)) {
      Tensor<T> db({k, n});
      linalg::gemm_tn(k, n, m, t.value(a).data(), g.data(), db.data());
      t.accumulate(b, db);
    }
  });
}

template <typename T>
Var transpose(Tape<T>& tape, Var a) {
  const auto& x = tape.value(a);
  require_rank("transpose", x.shape(), 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  }
  return tape.record(std::move(out), {a}, [a, r, c](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> d({r, c});
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] = g[j * r + i];
    }
    t.accumulate(a, d);
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var a, Shape shape) {
  const auto& x = tape.value(a);
  if (shape_size(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  auto out = x.reshaped(shape);
  Shape original = x.shape();
  return tape.record(std::move(out), {a}, [a, original](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g.reshaped(original));
  });
}

template <typename T>
Var bias_add(Tape<T>& tape, Var x, Var bias) {
  const auto& v = tape.value(x);
  const auto& b = tape.value(bias);
  if (v.rank() < 2 || b.rank() != 1 || b.dim(0) != v.dim(1)) shape_error("bias_add", v.shape(), b.shape());
  const std::size_t n = v.dim(0), c = v.dim(1), inner = v.size() / (n * c);
  Tensor<T> out = v;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T* p = out.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) p[j] += b[ch];
    }
  }
  return tape.record(std::move(out), {x, bias}, [x, bias, n, c, inner](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, g);
    if (t.requires_grad(bias)) {
      Tensor<T> db({c});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T* p = g.data() + (i * c + ch) * inner;
          T acc = 0;
          for (std::size_t j = 0; j < inner; ++j) acc += p[j];
          db[ch] += acc;
        }
      }
      t.accumulate(bias, db);
    }
  });
}

namespace {

// [N, C, P] <-> [C, N * P]
template <typename T>
void to_channel_major(const T* src, T* dst, std::size_t n, std::size_t c, std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) std::copy_n(src + (i * c + ch) * p, p, dst + (ch * n + i) * p);
  }
}

template <typename T>
void from_channel_major(const T* src, T* dst, std::size_t n, std::size_t c, std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) std::copy_n(src + (ch * n + i) * p, p, dst + (i * c + ch) * p);
  }
}

template <typename T>
void add_from_channel_major(const T* src, T* dst, std::size_t n, std::size_t c, std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* s = src + (ch * n + i) * p;
      T* d = dst + (i * c + ch) * p;
      for (std::size_t j = 0; j < p; ++j) d[j] += s[j];
    }
  }
}

}  // namespace

// Both convolutions run one GEMM over the whole batch: columns of image i
// occupy block i of a [patch, N * positions] matrix.
template <typename T>
Var conv3d(Tape<T>& tape, Var input, Var weight, const Conv3dParams& p) {
  const auto& x = tape.value(input);
  const auto& w = tape.value(weight);
  const Shape out_shape = conv3d_output_shape(x.shape(), w.shape(), p);
  const auto geo = conv3d_geometry(x.shape(), w.shape(), p);
  const std::size_t batch = x.dim(0), c_out = w.dim(0);
  const std::size_t positions = geo.out_positions(), patch = geo.patch_size();
  const std::size_t in_stride = x.size() / batch, ld = batch * positions;

  auto cols = std::make_shared<std::vector<T>>(patch * ld);
  for (std::size_t i = 0; i < batch; ++i) {
    linalg::im2col(geo, x.data() + i * in_stride, cols->data() + i * positions, ld);
  }
  std::vector<T> y(c_out * ld, T(0));
  linalg::gemm_nn(c_out, ld, patch, w.data(), cols->data(), y.data());
  Tensor<T> out(out_shape);
  from_channel_major(y.data(), out.data(), batch, c_out, positions);

  return tape.record(std::move(out), {input, weight}, [=](Tape<T>& t, const Tensor<T>& g) {
    std::vector<T> g2(c_out * ld);
    to_channel_major(g.data(), g2.data(), batch, c_out, positions);
    if (t.requires_grad(weight)) {
      linalg::gemm_nt(c_out, patch, ld, g2.data(), cols->data(), t.grad_buffer(weight).data());
    }
    if (t.requires_grad(input)) {
      std::vector<T> dcols(patch * ld, T(0));
      linalg::gemm_tn(patch, ld, c_out, t.value(weight).data(), g2.data(), dcols.data());
      T* dx = t.grad_buffer(input).data();
      for (std::size_t i = 0; i < batch; ++i) {
        linalg::col2im(geo, dcols.data() + i * positions, dx + i * in_stride, ld);
      }
    }
  });
}

template <typename T>
Var conv2d_transpose(Tape<T>& tape, Var input, Var weight, const ConvTranspose2dParams& p) {
  const auto& x = tape.value(input);
  const auto& w = tape.value(weight);
  const Shape out_shape = conv2d_transpose_output_shape(x.shape(), w.shape(), p);
  const std::size_t batch = x.dim(0), c_in = x.dim(1), c_out = w.dim(1);
  // The transposed conv is the adjoint of a conv over the output grid.
  linalg::Geometry3 geo;
  geo.channels = c_out;
  geo.in = {out_shape[2], out_shape[3], 1};
  geo.kernel = {w.dim(2), w.dim(3), 1};
  geo.stride = {p.stride, p.stride, 1};
  geo.pad = {p.pad, p.pad, 0};
  if (geo.out(0) != x.dim(2) || geo.out(1) != x.dim(3)) shape_error("conv2d_transpose", x.shape(), w.shape());
  const std::size_t positions = x.dim(2) * x.dim(3), patch = geo.patch_size();
  const std::size_t ld = batch * positions, out_stride = c_out * out_shape[2] * out_shape[3];

  auto x2 = std::make_shared<std::vector<T>>(c_in * ld);
  to_channel_major(x.data(), x2->data(), batch, c_in, positions);
  std::vector<T> cols(patch * ld, T(0));
  linalg::gemm_tn(patch, ld, c_in, w.data(), x2->data(), cols.data());
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < batch; ++i) {
    linalg::col2im(geo, cols.data() + i * positions, out.data() + i * out_stride, ld);
  }

  return tape.record(std::move(out), {input, weight}, [=](Tape<T>& t, const Tensor<T>& g) {
    std::vector<T> gcols(patch * ld);
    for (std::size_t i = 0; i < batch; ++i) {
      linalg::im2col(geo, g.data() + i * out_stride, gcols.data() + i * positions, ld);
    }
    if (t.requires_grad(input)) {
      std::vector<T> dx2(c_in * ld, T(0));
      linalg::gemm_nn(c_in, ld, patch, t.value(weight).data(), gcols.data(), dx2.data());
      add_from_channel_major(dx2.data(), t.grad_buffer(input).data(), batch, c_in, positions);
    }
    if (t.requires_grad(weight)) {
      linalg::gemm_nt(c_in, patch, ld, x2->data(), gcols.data(), t.grad_buffer(weight).data());
    }
  });
}

template <typename T>
Var leaky_relu(Tape<T>& tape, Var x, T slope) {
  auto out = map(tape.value(x), [slope](T v) { return v > T(0) ? v : slope * v; });
  return tape.record(std::move(out), {x}, [x, slope](Tape<T>& t, const Tensor<T>& g) {
    const auto& xv = t.value(x);
    Tensor<T> d(g.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = xv[i] > T(0) ? g[i] : slope * g[i];
    t.accumulate(x, d);
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  auto out = map(tape.value(x), [](T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  });
  Tensor<T> y = out;
  return tape.record(std::move(out), {x}, [x, y = std::move(y)](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> d(g.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * y[i] * (T(1) - y[i]);
    t.accumulate(x, d);
  });
}

template <typename T>
Var softmax(Tape<T>& tape, Var x, std::size_t axis) {
  const auto& v = tape.value(x);
  require_rank("softmax", v.shape(), 2);
  if (axis > 1) throw Error("gradtape", ErrorCode::ShapeError, "softmax axis must be 0 or 1");
  const std::size_t rows = v.dim(0), cols = v.dim(1);
  // Lines run along `axis`: stride between elements of one line, and the
  // offsets where each line starts.
  const std::size_t lines = axis == 1 ? rows : cols;
  const std::size_t len = axis == 1 ? cols : rows;
  const std::size_t step = axis == 1 ? 1 : cols;
  auto start = [=](std::size_t l) { return axis == 1 ? l * cols : l; };
  Tensor<T> out(v.shape());
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t s = start(l);
    T hi = v[s];
    for (std::size_t i = 1; i < len; ++i) hi = std::max(hi, v[s + i * step]);
    T total = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const T e = std::exp(v[s + i * step] - hi);
      out[s + i * step] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[s + i * step] /= total;
  }
  Tensor<T> y = out;
  return tape.record(std::move(out), {x}, [x, y = std::move(y), lines, len, step, start](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> d(g.shape());
    for (std::size_t l = 0; l < lines; ++l) {
      const std::size_t s = start(l);
      T dot = 0;
      for (std::size_t i = 0; i < len; ++i) dot += g[s + i * step] * y[s + i * step];
      for (std::size_t i = 0; i < len; ++i) d[s + i * step] = y[s + i * step] * (g[s + i * step] - dot);
    }
    t.accumulate(x, d);
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const auto& v = tape.value(x);
  T acc = 0;
  for (T e : v.flat()) acc += e;
  return tape.record(Tensor<T>({1}, {acc}), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, Tensor<T>(t.value(x).shape(), g[0]));
  });
}

template <typename T>
Var mean(Tape<T>& tape, Var x) {
  const auto& v = tape.value(x);
  T acc = 0;
  for (T e : v.flat()) acc += e;
  const T inv = T(1) / static_cast<T>(v.size());
  return tape.record(Tensor<T>({1}, {acc * inv}), {x}, [x, inv](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, Tensor<T>(t.value(x).shape(), g[0] * inv));
  });
}

template <typename T>
Var mean_axis(Tape<T>& tape, Var x, std::size_t axis) {
  const auto& v = tape.value(x);
  require_rank("mean_axis", v.shape(), 2);
  if (axis > 1) throw Error("gradtape", ErrorCode::ShapeError, "mean_axis axis must be 0 or 1");
  const std::size_t rows = v.dim(0), cols = v.dim(1);
  const std::size_t n_out = axis == 0 ? cols : rows;
  const T inv = T(1) / static_cast<T>(axis == 0 ? rows : cols);
  Tensor<T> out({n_out});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[axis == 0 ? c : r] += v[r * cols + c];
  }
  for (T& e : out.flat()) e *= inv;
  return tape.record(std::move(out), {x}, [x, axis, rows, cols, inv](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> d({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] = g[axis == 0 ? c : r] * inv;
    }
    t.accumulate(x, d);
  });
}

template <typename T>
Var mse(Tape<T>& tape, Var pred, Var target) {
  const auto& p = tape.value(pred);
  const auto& y = tape.value(target);
  if (p.shape() != y.shape()) shape_error("mse", p.shape(), y.shape());
  T acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T d = p[i] - y[i];
    acc += d * d;
  }
  const T inv = T(1) / static_cast<T>(p.size());
  return tape.record(Tensor<T>({1}, {acc * inv}), {pred, target}, [pred, target, inv](Tape<T>& t, const Tensor<T>& g) {
    const auto& pv = t.value(pred);
    const auto& yv = t.value(target);
    const T k = T(2) * inv * g[0];
    Tensor<T> d(pv.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = k * (pv[i] - yv[i]);
    t.accumulate(pred, d);
    if (t.requires_grad(target)) t.accumulate(target, map(d, [](T v) { return -v; }));
  });
}

#define SMAD_INSTANTIATE(T)                                                              \
  template Var add<T>(Tape<T>&, Var, Var);                                               \
  template Var sub<T>(Tape<T>&, Var, Var);                                               \
  template Var mul<T>(Tape<T>&, Var, Var);                                               \
  template Var scale<T>(Tape<T>&, Var, T);                                               \
  template Var matmul<T>(Tape<T>&, Var, Var);                                            \
  template Var transpose<T>(Tape<T>&, Var);                                              \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                         \
  template Var bias_add<T>(Tape<T>&, Var, Var);                                          \
  template Var conv3d<T>(Tape<T>&, Var, Var, const Conv3dParams&);                       \
  template Var conv2d_transpose<T>(Tape<T>&, Var, Var, const ConvTranspose2dParams&);    \
  template Var leaky_relu<T>(Tape<T>&, Var, T);                                          \
  template Var sigmoid<T>(Tape<T>&, Var);                                                \
  template Var softmax<T>(Tape<T>&, Var, std::size_t);                                   \
  template Var sum<T>(Tape<T>&, Var);                                                    \
  template Var mean<T>(Tape<T>&, Var);                                                   \
  template Var mean_axis<T>(Tape<T>&, Var, std::size_t);                                 \
  template Var mse<T>(Tape<T>&, Var, Var);

SMAD_INSTANTIATE(float)
SMAD_INSTANTIATE(double)

#undef SMAD_INSTANTIATE

}  // namespace smad::grad
