#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fsdm/errors.hpp"

namespace fsdm::numcore {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

// Dense row-major buffer. Rank 1 tensors behave as a single row; higher ranks
// are viewed as shape[0] rows of everything else.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = true;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0), bool trainable = true)
      : shape(std::move(s)), data(shape_size(shape), fill), requires_grad(trainable) {
    validate();
  }
  Tensor(Shape s, std::vector<T> values, bool trainable = true)
      : shape(std::move(s)), data(std::move(values)), requires_grad(trainable) {
    validate();
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.size() < 2 ? 1 : shape.front(); }
  std::size_t cols() const { return shape.empty() ? 1 : size() / rows(); }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  std::span<T> values() { return data; }
  std::span<const T> values() const { return data; }

  // Throws ShapeError when the buffer disagrees with the declared shape.
  void validate() const {
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimension must be positive: " + shape_string(shape));
    }
    if (data.size() != shape_size(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_string(shape));
    }
    if (!grad.empty() && grad.size() != data.size()) {
      throw ShapeError("gradient buffer does not match shape " + shape_string(shape));
    }
  }
};

// Fills with U(-scale, scale).
template <typename T, typename Rng>
void fill_uniform(Tensor<T>& t, T scale, Rng& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(scale),
                                              static_cast<double>(scale));
  for (auto& x : t.data) x = static_cast<T>(dist(rng));
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  Tensor<To> out;
  out.shape = t.shape;
  out.data.assign(t.data.begin(), t.data.end());
  out.requires_grad = t.requires_grad;
  return out;
}

}  // namespace fsdm::numcore
