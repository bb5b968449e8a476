#include <algorithm>
#include <cmath>
#include <numbers>

#include "has8/simd/kernels.hpp"

namespace has8::simd {
namespace {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T(0)) {
      std::fill(row, row + n, T(0));
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = alpha * (trans_a ? a[p * lda + i] : a[i * lda + p]);
      if (av == T(0)) continue;
      if (!trans_b) {
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) row[j] += av * b[j * ldb + p];
      }
    }
  }
}

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale(T alpha, const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <typename T>
void relu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* gy, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += x[i] > T(0) ? gy[i] : T(0);
}

template <typename T>
void membrane_update(const T* u, const T* s, const T* c, T* out,
                     std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T keep = T(1) - s[i];
    out[i] = keep * u[i] + c[i];
  }
}

template <typename T>
void membrane_backward(const T* u, const T* s, const T* g, T* gu, T* gs, T* gc,
                       std::size_t n) {
  if (gu != nullptr) {
    for (std::size_t i = 0; i < n; ++i) gu[i] += g[i] * (T(1) - s[i]);
  }
  if (gs != nullptr) {
    for (std::size_t i = 0; i < n; ++i) gs[i] -= g[i] * u[i];
  }
  if (gc != nullptr) {
    for (std::size_t i = 0; i < n; ++i) gc[i] += g[i];
  }
}

template <typename T>
void spike(const T* u, T threshold, T* s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) s[i] = (u[i] - threshold) >= T(0) ? T(1) : T(0);
}

template <typename T>
void spike_backward(const T* u, T threshold, T alpha, const T* g, T* gu,
                    std::size_t n) {
  const T c = std::numbers::pi_v<T> / T(2) * alpha;
  const T half_alpha = alpha / T(2);
  for (std::size_t i = 0; i < n; ++i) {
    const T z = c * (u[i] - threshold);
    const T d = T(1) + z * z;
    gu[i] += g[i] * (half_alpha / d);
  }
}

template <typename T>
void bitplane_encode(const T* x, std::size_t n, T* planes,
                     std::uint8_t* intensity) {
  for (std::size_t i = 0; i < n; ++i) {
    T v = x[i] * T(255);
    v = std::min(std::max(v, T(0)), T(255));
    T t = std::trunc(v);
    if (v - t >= T(0.5)) t += T(1);
    const auto level = static_cast<unsigned>(t);
    if (intensity != nullptr) intensity[i] = static_cast<std::uint8_t>(level);
    for (unsigned step = 0; step < 8; ++step) {
      planes[step * n + i] = static_cast<T>((level >> (7 - step)) & 1u);
    }
  }
}

template <typename T>
KernelTable<T> make_table() {
  return KernelTable<T>{Backend::kScalar,    &gemm<T>,
                        &add<T>,             &sub<T>,
                        &mul<T>,             &axpy<T>,
                        &scale<T>,           &relu<T>,
                        &relu_backward<T>,   &membrane_update<T>,
                        &membrane_backward<T>, &spike<T>,
                        &spike_backward<T>,  &bitplane_encode<T>};
}

}  // namespace

template <typename T>
const KernelTable<T>& scalar_kernels() {
  static const KernelTable<T> table = make_table<T>();
  return table;
}

template const KernelTable<float>& scalar_kernels<float>();
template const KernelTable<double>& scalar_kernels<double>();

}  // namespace has8::simd
