#include <atomic>
#include <stdexcept>
#include <string>

#include "has8/simd/kernels.hpp"

namespace has8::simd {

#if defined(HAS8_HAVE_AVX2)
template <typename T>
const KernelTable<T>& avx2_table();
#endif

namespace {

Backend detect() { return avx2_supported() ? Backend::kAvx2 : Backend::kScalar; }

std::atomic<Backend>& selected() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

}  // namespace

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool avx2_supported() {
#if defined(HAS8_HAVE_AVX2)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported;
#else
  return false;
#endif
}

template <typename T>
const KernelTable<T>* avx2_kernels() {
#if defined(HAS8_HAVE_AVX2)
  if (avx2_supported()) return &avx2_table<T>();
#endif
  return nullptr;
}

template <typename T>
const KernelTable<T>& kernels() {
  if (selected().load(std::memory_order_relaxed) == Backend::kAvx2) {
    return *avx2_kernels<T>();
  }
  return scalar_kernels<T>();
}

void set_backend(Backend backend) {
  if (backend == Backend::kAvx2 && !avx2_supported()) {
    throw std::invalid_argument("AVX2/FMA kernels are not available on this CPU/build");
  }
  selected().store(backend);
}

void set_backend(std::string_view name) {
  if (name == "auto") {
    selected().store(detect());
  } else if (name == "scalar") {
    set_backend(Backend::kScalar);
  } else if (name == "avx2") {
    set_backend(Backend::kAvx2);
  } else {
    throw std::invalid_argument("unknown kernel backend '" + std::string(name) +
                                "' (expected auto, scalar or avx2)");
  }
}

Backend active_backend() { return selected().load(); }

template const KernelTable<float>* avx2_kernels<float>();
template const KernelTable<double>* avx2_kernels<double>();
template const KernelTable<float>& kernels<float>();
template const KernelTable<double>& kernels<double>();

}  // namespace has8::simd
