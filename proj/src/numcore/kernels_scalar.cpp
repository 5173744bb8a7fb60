#include <cmath>

#include "fsdm/numcore/kernels.hpp"

namespace fsdm::numcore::kernels {
namespace {

template <typename T>
T dot_ref(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void gemv_ref(const T* w, const T* x, T* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_ref(w + r * cols, x, cols);
}

template <typename T>
void gemv_t_acc_ref(const T* w, const T* dy, T* dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] != T(0)) axpy_ref(dy[r], w + r * cols, dx, cols);
  }
}

template <typename T>
void ger_acc_ref(const T* dy, const T* x, T* dw, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] != T(0)) axpy_ref(dy[r], x, dw + r * cols, cols);
  }
}

template <typename T>
void adam_ref(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T b1, T b2, T eps, T bc1,
              T bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

template <typename T>
const KernelTable<T>& scalar_table() {
  static const KernelTable<T> t{&dot_ref<T>,        &axpy_ref<T>,    &gemv_ref<T>,
                                &gemv_t_acc_ref<T>, &ger_acc_ref<T>, &adam_ref<T>};
  return t;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace fsdm::numcore::kernels
