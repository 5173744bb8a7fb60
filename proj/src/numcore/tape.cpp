#include "fsdm/numcore/tape.hpp"

#include <sstream>

namespace fsdm::numcore {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Var<T> Tape<T>::param(Tensor<T>& tensor) {
  Node n;
  n.rows = tensor.rows();
  n.cols = tensor.cols();
  n.param = &tensor;
  n.needs_grad = recording_ && tensor.requires_grad;
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::constant(std::vector<T> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) throw ShapeError("constant: value count does not match shape");
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(values);
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
std::span<const T> Tape<T>::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  if (n.param) return n.param->data;
  return n.value;
}

template <typename T>
std::span<const T> Tape<T>::grad(std::uint32_t id) const {
  const Node& n = nodes_[id];
  if (n.param) return n.param->grad;
  return n.grad;
}

template <typename T>
T* Tape<T>::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.param) {
    n.param->ensure_grad();
    return n.param->grad.data();
  }
  if (n.grad.size() != n.rows * n.cols) n.grad.assign(n.rows * n.cols, T(0));
  return n.grad.data();
}

template <typename T>
Var<T> Tape<T>::push(std::size_t rows, std::size_t cols, std::vector<T> value,
                     std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  return push(rows, cols, std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
              std::move(fn));
}

template <typename T>
Var<T> Tape<T>::push(std::size_t rows, std::size_t cols, std::vector<T> value,
                     std::span<const Var<T>> inputs, BackwardFn fn) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  if (recording_) {
    for (const Var<T>& in : inputs) {
      if (&in.tape() != this) throw ContractViolation("op mixes nodes from different tapes");
      if (nodes_[in.id()].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (!recording_) throw ContractViolation("backward on a non-recording tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractViolation("backward requires a scalar loss");
  }
  grad_buffer(loss.id())[0] += T(1);
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, static_cast<std::uint32_t>(i));
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace fsdm::numcore
