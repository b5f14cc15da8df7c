#include "smad/grad/tape.hpp"

#include <atomic>

#include "smad/common/error.hpp"

namespace smad::grad {

namespace {

template <typename T>
std::atomic<std::size_t>& node_counter() {
  static std::atomic<std::size_t> count{0};
  return count;
}

}  // namespace

template <typename T>
const Tensor<T>& Gradients<T>::operator[](Var v) const {
  auto it = grads_.find(v.id);
  if (it == grads_.end()) {
    throw Error("gradtape", ErrorCode::BadLoss, "no gradient recorded for node " + std::to_string(v.id));
  }
  return it->second;
}

template <typename T>
Tape<T>::Tape() = default;

template <typename T>
Tape<T>::~Tape() {
  clear();
}

template <typename T>
std::size_t Tape<T>::live_nodes() {
  return node_counter<T>().load();
}

template <typename T>
Var Tape<T>::push(Node n) {
  if (check_finite_ && !n.value->all_finite()) {
    throw Error("gradtape", ErrorCode::NonFiniteGradient,
                "non-finite value recorded at node " + std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(n));
  ++node_counter<T>();
  return Var{nodes_.size() - 1};
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
  if (v.id >= nodes_.size()) throw Error("gradtape", ErrorCode::ShapeError, "stale tape handle");
  return nodes_[v.id];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) throw Error("gradtape", ErrorCode::ShapeError, "stale tape handle");
  return nodes_[v.id];
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::make_shared<const Tensor<T>>(std::move(value));
  n.leaf = true;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::parameter(Tensor<T> value) {
  Node n;
  n.value = std::make_shared<const Tensor<T>>(std::move(value));
  n.leaf = true;
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::watch(const Tensor<T>& value, bool requires_grad) {
  Node n;
  n.value = std::shared_ptr<const Tensor<T>>(std::shared_ptr<const Tensor<T>>{}, &value);
  n.leaf = true;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  return *node(v).value;
}

template <typename T>
bool Tape<T>::requires_grad(Var v) const {
  return node(v).requires_grad;
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::vector<Var> inputs, Pullback pullback) {
  Node n;
  for (Var in : inputs) n.requires_grad = n.requires_grad || node(in).requires_grad;
  n.value = std::make_shared<const Tensor<T>>(std::move(value));
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.pullback = std::move(pullback);
  return push(std::move(n));
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
  if (!in_backward_) throw Error("gradtape", ErrorCode::BadLoss, "gradient access outside backward()");
  Node& n = node(v);
  if (!n.grad) n.grad = std::make_unique<Tensor<T>>(n.value->shape());
  return *n.grad;
}

template <typename T>
void Tape<T>::accumulate(Var v, const Tensor<T>& delta) {
  if (!node(v).requires_grad) return;
  Tensor<T>& g = grad_buffer(v);
  if (g.shape() != delta.shape()) {
    throw Error("gradtape", ErrorCode::ShapeError,
                "gradient shape " + shape_string(delta.shape()) + " vs value shape " + shape_string(g.shape()));
  }
  T* dst = g.data();
  const T* src = delta.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

template <typename T>
Gradients<T> Tape<T>::backward(Var loss) {
  const Node& out = node(loss);
  if (out.value->size() != 1) {
    const std::string msg = "loss must be scalar, got shape " + shape_string(out.value->shape());
    clear();
    throw Error("gradtape", ErrorCode::BadLoss, msg);
  }
  in_backward_ = true;
  Gradients<T> result;
  try {
    if (out.requires_grad) {
      grad_buffer(loss)[0] = T(1);
      for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.grad || !n.requires_grad) continue;
        if (n.leaf) {
          result.grads_.emplace(i, std::move(*n.grad));
          n.grad.reset();
          continue;
        }
        if (n.pullback) n.pullback(*this, *n.grad);
        n.grad.reset();
      }
    }
    // Leaves the loss does not depend on get explicit zero gradients.
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].leaf && nodes_[i].requires_grad && !result.grads_.count(i)) {
        result.grads_.emplace(i, Tensor<T>(nodes_[i].value->shape()));
      }
    }
  } catch (...) {
    in_backward_ = false;
    clear();
    throw;
  }
  in_backward_ = false;
  clear();
  return result;
}

template <typename T>
void Tape<T>::clear() {
  node_counter<T>() -= nodes_.size();
  nodes_.clear();
}

template class Tape<float>;
template class Tape<double>;
template class Gradients<float>;
template class Gradients<double>;

}  // namespace smad::grad
