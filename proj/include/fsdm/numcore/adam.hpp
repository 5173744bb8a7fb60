#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fsdm/numcore/tensor.hpp"

namespace fsdm::numcore {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
struct OptimizerState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  double learning_rate = 0.00025;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. step() reads each tensor's grad buffer, applies
// the update, then clears the grads.
template <typename T>
class Adam {
 public:
  Adam(std::vector<NamedTensor<T>> params, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double epsilon = 1e-8);

  // Throws NumericError (naming the tensor) and leaves every parameter
  // untouched when any gradient is NaN or infinite.
  void step();
  void zero_grad();

  const OptimizerState<T>& state() const { return state_; }
  const std::vector<NamedTensor<T>>& params() const { return params_; }

 private:
  std::vector<NamedTensor<T>> params_;
  OptimizerState<T> state_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace fsdm::numcore
