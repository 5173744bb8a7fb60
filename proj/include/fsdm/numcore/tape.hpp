#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fsdm/numcore/tensor.hpp"

namespace fsdm::numcore {

template <typename T>
class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  std::span<const T> value() const;
  T item() const;  // value of a 1x1 node
  std::span<const T> grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so replaying the
// node list backwards is a valid topological order. Parameters enter as
// leaves that alias the owning Tensor; their gradients accumulate straight
// into Tensor::grad.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  // A non-recording tape skips gradient bookkeeping (inference).
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var<T> param(Tensor<T>& tensor);
  Var<T> constant(std::vector<T> values, std::size_t rows, std::size_t cols);
  Var<T> zeros(std::size_t rows, std::size_t cols) {
    return constant(std::vector<T>(rows * cols, T(0)), rows, cols);
  }

  std::size_t rows(std::uint32_t id) const { return nodes_[id].rows; }
  std::size_t cols(std::uint32_t id) const { return nodes_[id].cols; }
  std::span<const T> value(std::uint32_t id) const;
  std::span<const T> grad(std::uint32_t id) const;
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }

  // Gradient buffer of a node, allocated on first use.
  T* grad_buffer(std::uint32_t id);

  // Appends an op result. `fn` is dropped unless some input needs a gradient.
  Var<T> push(std::size_t rows, std::size_t cols, std::vector<T> value,
              std::initializer_list<Var<T>> inputs, BackwardFn fn);
  Var<T> push(std::size_t rows, std::size_t cols, std::vector<T> value,
              std::span<const Var<T>> inputs, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
  void backward(Var<T> loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> value;
    std::vector<T> grad;
    Tensor<T>* param = nullptr;
    bool needs_grad = false;
    BackwardFn backward;
  };

  bool recording_;
  std::vector<Node> nodes_;
};

template <typename T>
std::size_t Var<T>::rows() const {
  return tape_->rows(id_);
}
template <typename T>
std::size_t Var<T>::cols() const {
  return tape_->cols(id_);
}
template <typename T>
std::span<const T> Var<T>::value() const {
  return tape_->value(id_);
}
template <typename T>
std::span<const T> Var<T>::grad() const {
  return tape_->grad(id_);
}
template <typename T>
T Var<T>::item() const {
  if (size() != 1) throw ContractViolation("item() on a non-scalar node");
  return value()[0];
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fsdm::numcore
