#pragma once

// Dense inner loops used by the autodiff ops and the optimizer.
//
// Every kernel has a portable scalar reference implementation. When the
// library is built with FSDM_ENABLE_AVX2 and the running CPU reports AVX2 and
// FMA, an intrinsics version is selected at first use. The two paths agree up
// to floating point reassociation; tests/unit/kernels_test.cpp pins that.
//
// Matrices are row-major. `rows x cols` weight `w` maps a cols-vector to a
// rows-vector.

#include <cstddef>
#include <string_view>

namespace fsdm::numcore::kernels {

enum class Isa { kScalar, kAvx2 };

template <typename T>
struct KernelTable {
  // sum_i a[i] * b[i]
  T (*dot)(const T* a, const T* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // y = w * x
  void (*gemv)(const T* w, const T* x, T* y, std::size_t rows, std::size_t cols);
  // dx += w^T * dy
  void (*gemv_t_acc)(const T* w, const T* dy, T* dx, std::size_t rows, std::size_t cols);
  // dw += dy * x^T
  void (*ger_acc)(const T* dy, const T* x, T* dw, std::size_t rows, std::size_t cols);
  // One bias-corrected Adam update over n contiguous parameters.
  // bc1 = 1 - beta1^t, bc2 = 1 - beta2^t.
  void (*adam)(T* param, const T* grad, T* m, T* v, std::size_t n, T lr, T beta1,
               T beta2, T eps, T bc1, T bc2);
};

template <typename T>
const KernelTable<T>& scalar_table();

#if defined(FSDM_HAVE_AVX2)
template <typename T>
const KernelTable<T>& avx2_table();
#endif

// True when the ISA was compiled in and the CPU supports it.
bool isa_available(Isa isa);

// Kernels in use. Defaults to the best available ISA; the FSDM_ISA environment
// variable ("scalar" or "avx2") overrides the default.
Isa active_isa();
void set_active_isa(Isa isa);

template <typename T>
const KernelTable<T>& table(Isa isa);

template <typename T>
const KernelTable<T>& active() {
  return table<T>(active_isa());
}

std::string_view isa_name(Isa isa);

}  // namespace fsdm::numcore::kernels
