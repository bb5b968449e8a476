// AVX2 + FMA variants. Compiled with -mavx2 -mfma; only reached after a
// runtime CPU check in dispatch.cpp.

#include <immintrin.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "has8/simd/kernels.hpp"

namespace has8::simd {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using Reg = __m256;
  static constexpr std::size_t kWidth = 8;
  static Reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Reg v) { _mm256_storeu_ps(p, v); }
  static Reg set1(float v) { return _mm256_set1_ps(v); }
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static Reg sub(Reg a, Reg b) { return _mm256_sub_ps(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_ps(a, b); }
  static Reg div(Reg a, Reg b) { return _mm256_div_ps(a, b); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static Reg max(Reg a, Reg b) { return _mm256_max_ps(a, b); }
  static Reg min(Reg a, Reg b) { return _mm256_min_ps(a, b); }
  static Reg gt(Reg a, Reg b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
  static Reg ge(Reg a, Reg b) { return _mm256_cmp_ps(a, b, _CMP_GE_OQ); }
  static Reg bit_and(Reg a, Reg b) { return _mm256_and_ps(a, b); }
  static Reg trunc(Reg a) { return _mm256_round_ps(a, _MM_FROUND_TO_ZERO | _MM_FROUND_NO_EXC); }
};

template <>
struct Vec<double> {
  using Reg = __m256d;
  static constexpr std::size_t kWidth = 4;
  static Reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Reg v) { _mm256_storeu_pd(p, v); }
  static Reg set1(double v) { return _mm256_set1_pd(v); }
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static Reg sub(Reg a, Reg b) { return _mm256_sub_pd(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_pd(a, b); }
  static Reg div(Reg a, Reg b) { return _mm256_div_pd(a, b); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static Reg max(Reg a, Reg b) { return _mm256_max_pd(a, b); }
  static Reg min(Reg a, Reg b) { return _mm256_min_pd(a, b); }
  static Reg gt(Reg a, Reg b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
  static Reg ge(Reg a, Reg b) { return _mm256_cmp_pd(a, b, _CMP_GE_OQ); }
  static Reg bit_and(Reg a, Reg b) { return _mm256_and_pd(a, b); }
  static Reg trunc(Reg a) { return _mm256_round_pd(a, _MM_FROUND_TO_ZERO | _MM_FROUND_NO_EXC); }
};

// ---------------------------------------------------------------------------
// GEMM: packed panels + 6 x (2 * width) register-blocked micro-kernel.

constexpr std::size_t kMr = 6;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;
constexpr std::size_t kNc = 2048;

template <typename T>
struct GemmOperand {
  const T* data;
  std::size_t ld;
  bool trans;
  T at(std::size_t row, std::size_t col) const {
    return trans ? data[col * ld + row] : data[row * ld + col];
  }
};

// Packs op(A)[i0:i0+mc, p0:p0+kc] into kMr-row panels, p-major inside a panel.
template <typename T>
void pack_a(const GemmOperand<T>& a, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, T* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < rows; ++r) out[r] = a.at(i0 + ir + r, p0 + p);
      for (std::size_t r = rows; r < kMr; ++r) out[r] = T(0);
      out += kMr;
    }
  }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into nr-column panels, p-major inside a panel.
template <typename T, std::size_t kNr>
void pack_b(const GemmOperand<T>& b, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, T* out) {
  for (std::size_t jr = 0; jr < nc; jr += kNr) {
    const std::size_t cols = std::min(kNr, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      if (!b.trans && cols == kNr) {
        const T* src = b.data + (p0 + p) * b.ld + j0 + jr;
        std::copy(src, src + kNr, out);
      } else {
        for (std::size_t c = 0; c < cols; ++c) out[c] = b.at(p0 + p, j0 + jr + c);
        for (std::size_t c = cols; c < kNr; ++c) out[c] = T(0);
      }
      out += kNr;
    }
  }
}

template <typename T>
void micro_kernel(std::size_t kc, const T* pa, const T* pb, T alpha, T* c,
                  std::size_t ldc, std::size_t rows, std::size_t cols) {
  using V = Vec<T>;
  constexpr std::size_t w = V::kWidth;
  typename V::Reg acc[kMr][2];
  for (auto& row : acc) row[0] = row[1] = V::zero();
  for (std::size_t p = 0; p < kc; ++p) {
    const auto b0 = V::load(pb);
    const auto b1 = V::load(pb + w);
    for (std::size_t r = 0; r < kMr; ++r) {
      const auto av = V::set1(pa[r]);
      acc[r][0] = V::fmadd(av, b0, acc[r][0]);
      acc[r][1] = V::fmadd(av, b1, acc[r][1]);
    }
    pa += kMr;
    pb += 2 * w;
  }
  const auto va = V::set1(alpha);
  if (rows == kMr && cols == 2 * w) {
    for (std::size_t r = 0; r < kMr; ++r) {
      T* dst = c + r * ldc;
      V::store(dst, V::fmadd(va, acc[r][0], V::load(dst)));
      V::store(dst + w, V::fmadd(va, acc[r][1], V::load(dst + w)));
    }
    return;
  }
  alignas(32) T tmp[2 * w];
  for (std::size_t r = 0; r < rows; ++r) {
    V::store(tmp, V::mul(va, acc[r][0]));
    V::store(tmp + w, V::mul(va, acc[r][1]));
    T* dst = c + r * ldc;
    for (std::size_t j = 0; j < cols; ++j) dst[j] += tmp[j];
  }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T beta, T* c, std::size_t ldc) {
  constexpr std::size_t kNr = 2 * Vec<T>::kWidth;
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T(0)) {
      std::fill(row, row + n, T(0));
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
  if (m == 0 || n == 0 || k == 0 || alpha == T(0)) return;

  const GemmOperand<T> opa{a, lda, trans_a};
  const GemmOperand<T> opb{b, ldb, trans_b};
  thread_local std::vector<T> buf_a;
  thread_local std::vector<T> buf_b;
  buf_a.resize(kMc * kKc);
  buf_b.resize(kKc * (kNc + kNr));

  for (std::size_t j0 = 0; j0 < n; j0 += kNc) {
    const std::size_t nc = std::min(kNc, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
      const std::size_t kc = std::min(kKc, k - p0);
      pack_b<T, kNr>(opb, p0, kc, j0, nc, buf_b.data());
      for (std::size_t i0 = 0; i0 < m; i0 += kMc) {
        const std::size_t mc = std::min(kMc, m - i0);
        pack_a(opa, i0, mc, p0, kc, buf_a.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const T* pb = buf_b.data() + (jr / kNr) * kc * kNr;
          const std::size_t cols = std::min(kNr, nc - jr);
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const T* pa = buf_a.data() + (ir / kMr) * kc * kMr;
            const std::size_t rows = std::min(kMr, mc - ir);
            micro_kernel(kc, pa, pb, alpha, c + (i0 + ir) * ldc + j0 + jr, ldc,
                         rows, cols);
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise. Tails reuse the scalar formulas in the same operation order.

template <typename T, typename VecOp, typename ScalarOp>
void binary(const T* a, const T* b, T* out, std::size_t n, VecOp vop,
            ScalarOp sop) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    V::store(out + i, vop(V::load(a + i), V::load(b + i)));
  }
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  binary(a, b, out, n, Vec<T>::add, [](T x, T y) { return x + y; });
}

template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
  binary(a, b, out, n, Vec<T>::sub, [](T x, T y) { return x - y; });
}

template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  binary(a, b, out, n, Vec<T>::mul, [](T x, T y) { return x * y; });
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  using V = Vec<T>;
  const auto va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    V::store(y + i, V::add(V::load(y + i), V::mul(va, V::load(x + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale(T alpha, const T* x, T* out, std::size_t n) {
  using V = Vec<T>;
  const auto va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    V::store(out + i, V::mul(va, V::load(x + i)));
  }
  for (; i < n; ++i) out[i] = alpha * x[i];
}

template <typename T>
void relu(const T* x, T* y, std::size_t n) {
  using V = Vec<T>;
  const auto z = V::zero();
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    const auto v = V::load(x + i);
    V::store(y + i, V::bit_and(v, V::gt(v, z)));
  }
  for (; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* gy, T* gx, std::size_t n) {
  using V = Vec<T>;
  const auto z = V::zero();
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    const auto mask = V::gt(V::load(x + i), z);
    V::store(gx + i, V::add(V::load(gx + i), V::bit_and(V::load(gy + i), mask)));
  }
  for (; i < n; ++i) gx[i] += x[i] > T(0) ? gy[i] : T(0);
}

template <typename T>
void membrane_update(const T* u, const T* s, const T* c, T* out,
                     std::size_t n) {
  using V = Vec<T>;
  const auto one = V::set1(T(1));
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    const auto keep = V::sub(one, V::load(s + i));
    V::store(out + i, V::add(V::mul(keep, V::load(u + i)), V::load(c + i)));
  }
  for (; i < n; ++i) {
    const T keep = T(1) - s[i];
    out[i] = keep * u[i] + c[i];
  }
}

template <typename T>
void membrane_backward(const T* u, const T* s, const T* g, T* gu, T* gs, T* gc,
                       std::size_t n) {
  using V = Vec<T>;
  const auto one = V::set1(T(1));
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    const auto gv = V::load(g + i);
    if (gu != nullptr) {
      const auto keep = V::sub(one, V::load(s + i));
      V::store(gu + i, V::add(V::load(gu + i), V::mul(gv, keep)));
    }
    if (gs != nullptr) {
      V::store(gs + i, V::sub(V::load(gs + i), V::mul(gv, V::load(u + i))));
    }
    if (gc != nullptr) V::store(gc + i, V::add(V::load(gc + i), gv));
  }
  for (; i < n; ++i) {
    if (gu != nullptr) gu[i] += g[i] * (T(1) - s[i]);
    if (gs != nullptr) gs[i] -= g[i] * u[i];
    if (gc != nullptr) gc[i] += g[i];
  }
}

template <typename T>
void spike(const T* u, T threshold, T* s, std::size_t n) {
  using V = Vec<T>;
  const auto th = V::set1(threshold);
  const auto one = V::set1(T(1));
  const auto z = V::zero();
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    const auto mask = V::ge(V::sub(V::load(u + i), th), z);
    V::store(s + i, V::bit_and(one, mask));
  }
  for (; i < n; ++i) s[i] = (u[i] - threshold) >= T(0) ? T(1) : T(0);
}

template <typename T>
void spike_backward(const T* u, T threshold, T alpha, const T* g, T* gu,
                    std::size_t n) {
  using V = Vec<T>;
  const T c = std::numbers::pi_v<T> / T(2) * alpha;
  const T half_alpha = alpha / T(2);
  const auto vc = V::set1(c);
  const auto vh = V::set1(half_alpha);
  const auto th = V::set1(threshold);
  const auto one = V::set1(T(1));
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    const auto z = V::mul(vc, V::sub(V::load(u + i), th));
    const auto d = V::add(one, V::mul(z, z));
    const auto sg = V::div(vh, d);
    V::store(gu + i, V::add(V::load(gu + i), V::mul(V::load(g + i), sg)));
  }
  for (; i < n; ++i) {
    const T z = c * (u[i] - threshold);
    const T d = T(1) + z * z;
    gu[i] += g[i] * (half_alpha / d);
  }
}

template <typename T>
void bitplane_encode_tail(const T* x, std::size_t begin, std::size_t n,
                          T* planes, std::uint8_t* intensity) {
  for (std::size_t i = begin; i < n; ++i) {
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

// Rounded intensity levels for one register of x.
template <typename T>
typename Vec<T>::Reg quantize(const T* x) {
  using V = Vec<T>;
  auto v = V::mul(V::load(x), V::set1(T(255)));
  v = V::min(V::max(v, V::zero()), V::set1(T(255)));
  const auto t = V::trunc(v);
  const auto bump = V::bit_and(V::ge(V::sub(v, t), V::set1(T(0.5))), V::set1(T(1)));
  return V::add(t, bump);
}

void bitplane_encode_f32(const float* x, std::size_t n, float* planes,
                         std::uint8_t* intensity) {
  std::size_t i = 0;
  const __m256i one = _mm256_set1_epi32(1);
  for (; i + 8 <= n; i += 8) {
    const __m256i level = _mm256_cvttps_epi32(quantize<float>(x + i));
    if (intensity != nullptr) {
      alignas(32) std::int32_t tmp[8];
      _mm256_store_si256(reinterpret_cast<__m256i*>(tmp), level);
      for (int j = 0; j < 8; ++j) intensity[i + j] = static_cast<std::uint8_t>(tmp[j]);
    }
    for (int step = 0; step < 8; ++step) {
      const __m256i shift = _mm256_set1_epi32(7 - step);
      const __m256i bit = _mm256_and_si256(_mm256_srlv_epi32(level, shift), one);
      _mm256_storeu_ps(planes + step * n + i, _mm256_cvtepi32_ps(bit));
    }
  }
  bitplane_encode_tail(x, i, n, planes, intensity);
}

void bitplane_encode_f64(const double* x, std::size_t n, double* planes,
                         std::uint8_t* intensity) {
  std::size_t i = 0;
  const __m128i one = _mm_set1_epi32(1);
  for (; i + 4 <= n; i += 4) {
    const __m128i level = _mm256_cvttpd_epi32(quantize<double>(x + i));
    if (intensity != nullptr) {
      alignas(16) std::int32_t tmp[4];
      _mm_store_si128(reinterpret_cast<__m128i*>(tmp), level);
      for (int j = 0; j < 4; ++j) intensity[i + j] = static_cast<std::uint8_t>(tmp[j]);
    }
    for (int step = 0; step < 8; ++step) {
      const __m128i shift = _mm_set1_epi32(7 - step);
      const __m128i bit = _mm_and_si128(_mm_srlv_epi32(level, shift), one);
      _mm256_storeu_pd(planes + step * n + i, _mm256_cvtepi32_pd(bit));
    }
  }
  bitplane_encode_tail(x, i, n, planes, intensity);
}

template <typename T>
KernelTable<T> make_table() {
  KernelTable<T> t{};
  t.backend = Backend::kAvx2;
  t.gemm = &gemm<T>;
  t.add = &add<T>;
  t.sub = &sub<T>;
  t.mul = &mul<T>;
  t.axpy = &axpy<T>;
  t.scale = &scale<T>;
  t.relu = &relu<T>;
  t.relu_backward = &relu_backward<T>;
  t.membrane_update = &membrane_update<T>;
  t.membrane_backward = &membrane_backward<T>;
  t.spike = &spike<T>;
  t.spike_backward = &spike_backward<T>;
  if constexpr (std::is_same_v<T, float>) {
    t.bitplane_encode = &bitplane_encode_f32;
  } else {
    t.bitplane_encode = &bitplane_encode_f64;
  }
  return t;
}

}  // namespace

template <typename T>
const KernelTable<T>& avx2_table() {
  static const KernelTable<T> table = make_table<T>();
  return table;
}

template const KernelTable<float>& avx2_table<float>();
template const KernelTable<double>& avx2_table<double>();

}  // namespace has8::simd
