#pragma once

// Data-parallel inner loops behind the tensor ops. Every kernel has a scalar
// reference implementation; an AVX2/FMA variant is compiled separately and
// selected at runtime when the CPU supports it.
//
// Conventions:
//   - all pointers are dense, row-major, non-aliasing unless noted;
//   - "accumulate" kernels (names ending in _backward) add into their outputs;
//   - nullptr outputs of backward kernels are skipped.
//
// Elementwise kernels are bit-exact between backends (kernel TUs are built
// with -ffp-contract=off and the SIMD code uses the same operation order).
// gemm uses FMA in the AVX2 path and only agrees to rounding.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace has8::simd {

enum class Backend { kScalar, kAvx2 };

std::string_view backend_name(Backend backend);

template <typename T>
struct KernelTable {
  Backend backend;

  // C[m,n] = alpha * op(A)[m,k] * op(B)[k,n] + beta * C. Row-major with
  // leading dimensions; op(X) = X^T when the trans flag is set. beta == 0
  // overwrites C without reading it.
  void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
               std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
               std::size_t ldb, T beta, T* c, std::size_t ldc);

  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  void (*sub)(const T* a, const T* b, T* out, std::size_t n);
  void (*mul)(const T* a, const T* b, T* out, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // out = alpha * x
  void (*scale)(T alpha, const T* x, T* out, std::size_t n);

  void (*relu)(const T* x, T* y, std::size_t n);
  // gx += (x > 0) ? gy : 0
  void (*relu_backward)(const T* x, const T* gy, T* gx, std::size_t n);

  // out = (1 - s) * u + c    (hard-reset integrate step)
  void (*membrane_update)(const T* u, const T* s, const T* c, T* out,
                          std::size_t n);
  // gu += g * (1 - s); gs -= g * u; gc += g
  void (*membrane_backward)(const T* u, const T* s, const T* g, T* gu, T* gs,
                            T* gc, std::size_t n);

  // s = (u - threshold >= 0) ? 1 : 0
  void (*spike)(const T* u, T threshold, T* s, std::size_t n);
  // gu += g * alpha / (2 * (1 + (pi/2 * alpha * (u - threshold))^2))
  void (*spike_backward)(const T* u, T threshold, T alpha, const T* g, T* gu,
                         std::size_t n);

  // I = round_half_away(clamp(255 * x, 0, 255)); planes[t * n + i] holds bit
  // (7 - t) of I, so t = 0 is the most significant plane. intensity may be
  // nullptr.
  void (*bitplane_encode)(const T* x, std::size_t n, T* planes,
                          std::uint8_t* intensity);
};

template <typename T>
const KernelTable<T>& scalar_kernels();

// nullptr when the AVX2 variant was not compiled in or the CPU lacks
// AVX2/FMA.
template <typename T>
const KernelTable<T>* avx2_kernels();

// The table used by all tensor ops.
template <typename T>
const KernelTable<T>& kernels();

bool avx2_supported();

// Selects the backend for subsequent kernels<T>() calls. Throws
// std::invalid_argument when the backend is not available.
void set_backend(Backend backend);
Backend active_backend();

// "auto" | "scalar" | "avx2"
void set_backend(std::string_view name);

}  // namespace has8::simd
