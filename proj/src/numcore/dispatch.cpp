#include <atomic>
#include <cstdlib>
#include <string>

#include "fsdm/numcore/kernels.hpp"

namespace fsdm::numcore::kernels {
namespace {

bool probe_avx2() {
#if defined(FSDM_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool cpu_has_avx2() {
  static const bool has = probe_avx2();
  return has;
}

Isa default_isa() {
  Isa best = cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
  if (const char* env = std::getenv("FSDM_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::kScalar;
    if (want == "avx2" && best == Isa::kAvx2) return Isa::kAvx2;
  }
  return best;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{default_isa()};
  return isa;
}

}  // namespace

bool isa_available(Isa isa) {
  return isa == Isa::kScalar || (isa == Isa::kAvx2 && cpu_has_avx2());
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  current().store(isa_available(isa) ? isa : Isa::kScalar, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& table(Isa isa) {
#if defined(FSDM_HAVE_AVX2)
  if (isa == Isa::kAvx2 && cpu_has_avx2()) return avx2_table<T>();
#endif
  (void)isa;
  return scalar_table<T>();
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

}  // namespace fsdm::numcore::kernels
