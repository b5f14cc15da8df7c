#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "smad/grad/tensor.hpp"

namespace smad::grad {

// Handle to a node recorded on a Tape. Only meaningful for the tape that
// issued it, and only until that tape is cleared.
struct Var {
  std::size_t id = 0;
  bool operator==(const Var&) const = default;
};

template <typename T>
class Tape;

template <typename T>
class Gradients {
 public:
  const Tensor<T>& operator[](Var v) const;
  bool contains(Var v) const { return grads_.count(v.id) != 0; }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape<T>;
  std::unordered_map<std::size_t, Tensor<T>> grads_;
};

// Records primitive ops in execution order; backward() walks the record in
// reverse. Single-threaded; use one tape per thread.
template <typename T>
class Tape {
 public:
  using Pullback = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf holding a copy of `value`.
  Var constant(Tensor<T> value);
  Var parameter(Tensor<T> value);
  // Leaf that references `value` without copying; the tensor must outlive
  // the recording.
  Var watch(const Tensor<T>& value, bool requires_grad = true);

  const Tensor<T>& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Records an op output. `pullback` receives dL/d(output) and must call
  // accumulate() for each input that requires a gradient.
  Var record(Tensor<T> value, std::vector<Var> inputs, Pullback pullback);

  // dL/dv += delta. Only valid during backward().
  void accumulate(Var v, const Tensor<T>& delta);
  // Mutable gradient buffer for v (allocated zero on first use). Only valid
  // during backward().
  Tensor<T>& grad_buffer(Var v);

  // Gradients of a scalar loss for every requires_grad leaf, then clears
  // the tape.
  Gradients<T> backward(Var loss);

  void clear();

  // Checks each recorded output for NaN/Inf (on by default in debug builds).
  void set_check_finite(bool on) noexcept { check_finite_ = on; }

  // Tape nodes alive across all tapes of this element type.
  static std::size_t live_nodes();

 private:
  struct Node {
    std::shared_ptr<const Tensor<T>> value;
    std::unique_ptr<Tensor<T>> grad;
    std::vector<Var> inputs;
    Pullback pullback;
    bool requires_grad = false;
    bool leaf = false;
  };

  Var push(Node node);
  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool in_backward_ = false;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

extern template class Tape<float>;
extern template class Tape<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace smad::grad
