#include "fsdm/numcore/adam.hpp"

#include <cmath>

#include "fsdm/numcore/kernels.hpp"

namespace fsdm::numcore {

template <typename T>
Adam<T>::Adam(std::vector<NamedTensor<T>> params, double learning_rate, double beta1, double beta2,
              double epsilon)
    : params_(std::move(params)) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  state_.learning_rate = learning_rate;
  state_.beta1 = beta1;
  state_.beta2 = beta2;
  state_.epsilon = epsilon;
  for (const auto& p : params_) {
    state_.first_moment.emplace_back(p.tensor->size(), T(0));
    state_.second_moment.emplace_back(p.tensor->size(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  for (const auto& p : params_) {
    if (!p.tensor->has_grad()) continue;
    for (std::size_t i = 0; i < p.tensor->grad.size(); ++i) {
      if (!std::isfinite(p.tensor->grad[i])) {
        throw NumericError("non-finite gradient in '" + p.name + "' at element " + std::to_string(i) +
                           " (step " + std::to_string(state_.step_count + 1) + ")");
      }
    }
  }
  ++state_.step_count;
  const double t = static_cast<double>(state_.step_count);
  const T bc1 = static_cast<T>(1.0 - std::pow(state_.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(state_.beta2, t));
  const auto& k = kernels::active<T>();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& p = *params_[i].tensor;
    // A tensor the loss never reached still decays its moments.
    p.ensure_grad();
    k.adam(p.data.data(), p.grad.data(), state_.first_moment[i].data(), state_.second_moment[i].data(),
           p.size(), static_cast<T>(state_.learning_rate), static_cast<T>(state_.beta1),
           static_cast<T>(state_.beta2), static_cast<T>(state_.epsilon), bc1, bc2);
  }
  zero_grad();
}

template <typename T>
void Adam<T>::zero_grad() {
  for (const auto& p : params_) p.tensor->zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace fsdm::numcore
