#include "has8/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>

#include "has8/errors.hpp"
#include "has8/simd/kernels.hpp"

namespace has8 {
namespace {

template <typename T>
const simd::KernelTable<T>& k() {
  return simd::kernels<T>();
}

// Flat index of the broadcast source element for every output element.
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    stride[i + offset] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  const std::size_t n = numel(out);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    map[flat] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      src += stride[d];
      if (counter[d] < out[d]) break;
      src -= stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return map;
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind) {
  static constexpr const char* kNames[] = {"add", "sub", "mul", "div"};
  const char* name = kNames[static_cast<int>(kind)];
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  const std::size_t n = numel(out_shape);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  auto o = out.mutable_data();
  const auto ad = a.data();
  const auto bd = b.data();

  const bool same = a.shape() == b.shape();
  std::shared_ptr<std::vector<std::size_t>> ma, mb;
  if (same) {
    switch (kind) {
      case BinaryKind::kAdd: k<T>().add(ad.data(), bd.data(), o.data(), n); break;
      case BinaryKind::kSub: k<T>().sub(ad.data(), bd.data(), o.data(), n); break;
      case BinaryKind::kMul: k<T>().mul(ad.data(), bd.data(), o.data(), n); break;
      case BinaryKind::kDiv:
        for (std::size_t i = 0; i < n; ++i) o[i] = ad[i] / bd[i];
        break;
    }
  } else {
    ma = std::make_shared<std::vector<std::size_t>>(broadcast_index(a.shape(), out_shape));
    mb = std::make_shared<std::vector<std::size_t>>(broadcast_index(b.shape(), out_shape));
    const auto& ia = *ma;
    const auto& ib = *mb;
    for (std::size_t i = 0; i < n; ++i) {
      const T x = ad[ia[i]];
      const T y = bd[ib[i]];
      switch (kind) {
        case BinaryKind::kAdd: o[i] = x + y; break;
        case BinaryKind::kSub: o[i] = x - y; break;
        case BinaryKind::kMul: o[i] = x * y; break;
        case BinaryKind::kDiv: o[i] = x / y; break;
      }
    }
  }

  return record<T>(name, out, {a, b},
                   [kind, ma, mb](const TapeNode<T>& node, BackwardContext<T>& ctx) {
    const auto g = ctx.grad_out;
    const auto ad = node.input_data(0);
    const auto bd = node.input_data(1);
    const std::size_t n = g.size();
    auto ia = [&](std::size_t i) { return ma ? (*ma)[i] : i; };
    auto ib = [&](std::size_t i) { return mb ? (*mb)[i] : i; };
    if (ctx.needs(0)) {
      auto ga = ctx.grad_in[0];
      for (std::size_t i = 0; i < n; ++i) {
        switch (kind) {
          case BinaryKind::kAdd:
          case BinaryKind::kSub: ga[ia(i)] += g[i]; break;
          case BinaryKind::kMul: ga[ia(i)] += g[i] * bd[ib(i)]; break;
          case BinaryKind::kDiv: ga[ia(i)] += g[i] / bd[ib(i)]; break;
        }
      }
    }
    if (ctx.needs(1)) {
      auto gb = ctx.grad_in[1];
      for (std::size_t i = 0; i < n; ++i) {
        switch (kind) {
          case BinaryKind::kAdd: gb[ib(i)] += g[i]; break;
          case BinaryKind::kSub: gb[ib(i)] -= g[i]; break;
          case BinaryKind::kMul: gb[ib(i)] += g[i] * ad[ia(i)]; break;
          case BinaryKind::kDiv: {
            const T y = bd[ib(i)];
            gb[ib(i)] -= g[i] * ad[ia(i)] / (y * y);
            break;
          }
        }
      }
    }
  });
}

// y = f(x); dy/dx = df(x, y).
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, const char* name, F f, DF df) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto o = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) o[i] = f(xd[i]);
  return record<T>(name, out, {x}, [df](const TapeNode<T>& node, BackwardContext<T>& ctx) {
    if (!ctx.needs(0)) return;
    const auto xd = node.input_data(0);
    auto gx = ctx.grad_in[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += ctx.grad_out[i] * df(xd[i], ctx.out[i]);
  });
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + " expects a rank-" + std::to_string(rank) +
                     " tensor, got " + to_string(s));
  }
}

template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, std::size_t ho, std::size_t wo,
            const Conv2dParams& p, T* col, std::size_t ld) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        T* dst = col + ((c * kh + i) * kw + j) * ld;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + i) -
                                    static_cast<std::ptrdiff_t>(p.pad);
          T* row = dst + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(row, row + wo, T(0));
            continue;
          }
          const T* src = x + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * p.stride + j) -
                                      static_cast<std::ptrdiff_t>(p.pad);
            row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0)
                                                                     : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, std::size_t ho, std::size_t wo,
                const Conv2dParams& p, T* x, std::size_t ld) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const T* src = col + ((c * kh + i) * kw + j) * ld;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + i) -
                                    static_cast<std::ptrdiff_t>(p.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = x + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * p.stride + j) -
                                      static_cast<std::ptrdiff_t>(p.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, BinaryKind::kAdd); }
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, BinaryKind::kSub); }
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, BinaryKind::kMul); }
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, BinaryKind::kDiv); }

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return unary(x, "add_scalar", [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  k<T>().scale(c, x.data().data(), out.mutable_data().data(), x.numel());
  return record<T>("mul_scalar", out, {x}, [c](const TapeNode<T>&, BackwardContext<T>& ctx) {
    if (ctx.needs(0)) k<T>().axpy(c, ctx.grad_out.data(), ctx.grad_in[0].data(), ctx.grad_out.size());
  });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return mul_scalar(x, T(-1));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  k<T>().relu(x.data().data(), out.mutable_data().data(), x.numel());
  return record<T>("relu", out, {x}, [](const TapeNode<T>& node, BackwardContext<T>& ctx) {
    if (ctx.needs(0)) {
      k<T>().relu_backward(node.input_data(0).data(), ctx.grad_out.data(),
                           ctx.grad_in[0].data(), ctx.grad_out.size());
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); },
               [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary(x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& x) {
  return unary(x, "sin", [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary(
      x, "clamp", [lo, hi](T v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (const T v : x.data()) total += v;
  return record<T>("sum", Tensor<T>::scalar(total), {x},
                   [](const TapeNode<T>&, BackwardContext<T>& ctx) {
                     if (!ctx.needs(0)) return;
                     const T g = ctx.grad_out[0];
                     for (T& v : ctx.grad_in[0]) v += g;
                   });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const T scale = T(1) / static_cast<T>(x.numel());
  T total = T(0);
  for (const T v : x.data()) total += v;
  return record<T>("mean", Tensor<T>::scalar(total * scale), {x},
                   [scale](const TapeNode<T>&, BackwardContext<T>& ctx) {
                     if (!ctx.needs(0)) return;
                     const T g = ctx.grad_out[0] * scale;
                     for (T& v : ctx.grad_in[0]) v += g;
                   });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  }
  Tensor<T> out = Tensor<T>::wrap(std::move(shape), x.impl()->storage);
  return record<T>("reshape", out, {x}, [](const TapeNode<T>&, BackwardContext<T>& ctx) {
    if (ctx.needs(0)) k<T>().axpy(T(1), ctx.grad_out.data(), ctx.grad_in[0].data(), ctx.grad_out.size());
  });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  if (x.dim() < 1) throw ShapeError("flatten needs at least one axis");
  const std::size_t n = x.size(0);
  return reshape(x, Shape{n, n == 0 ? 0 : x.numel() / n});
}

template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t index) {
  if (x.dim() < 1 || index >= x.size(0)) {
    throw ShapeError("select index " + std::to_string(index) + " out of range for " +
                     to_string(x.shape()));
  }
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t block = numel(shape);
  const auto src = x.data().subspan(index * block, block);
  Tensor<T> out(shape, std::vector<T>(src.begin(), src.end()));
  return record<T>("select", out, {x},
                   [index, block](const TapeNode<T>&, BackwardContext<T>& ctx) {
                     if (!ctx.needs(0)) return;
                     k<T>().axpy(T(1), ctx.grad_out.data(),
                                 ctx.grad_in[0].data() + index * block, block);
                   });
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("stack needs at least one tensor");
  const Shape& inner = parts.front().shape();
  for (const auto& p : parts) {
    if (p.shape() != inner) {
      throw ShapeError("stack: mismatched shapes " + to_string(inner) + " and " +
                       to_string(p.shape()));
    }
  }
  const std::size_t block = numel(inner);
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<T> values;
  values.reserve(block * parts.size());
  for (const auto& p : parts) values.insert(values.end(), p.data().begin(), p.data().end());
  Tensor<T> out(shape, std::move(values));
  return record<T>("stack", out, parts, [block](const TapeNode<T>& node, BackwardContext<T>& ctx) {
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (!ctx.needs(i)) continue;
      k<T>().axpy(T(1), ctx.grad_out.data() + i * block, ctx.grad_in[i].data(), block);
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.size(0), kk = a.size(1), n = b.size(1);
  if (b.size(0) != kk) {
    throw ShapeError("matmul inner extents differ: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  Tensor<T> out = Tensor<T>::zeros({m, n});
  k<T>().gemm(false, false, m, n, kk, T(1), a.data().data(), kk, b.data().data(), n, T(0),
              out.mutable_data().data(), n);
  return record<T>("matmul", out, {a, b}, [m, kk, n](const TapeNode<T>& node, BackwardContext<T>& ctx) {
    const T* g = ctx.grad_out.data();
    if (ctx.needs(0)) {  // dA = G B^T
      k<T>().gemm(false, true, m, kk, n, T(1), g, n, node.input_data(1).data(), n, T(1),
                  ctx.grad_in[0].data(), kk);
    }
    if (ctx.needs(1)) {  // dB = A^T G
      k<T>().gemm(true, false, kk, n, m, T(1), node.input_data(0).data(), kk, g, n, T(1),
                  ctx.grad_in[1].data(), n);
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias) {
  require_rank(x.shape(), 2, "linear");
  require_rank(weight.shape(), 2, "linear weight");
  const std::size_t batch = x.size(0), in = x.size(1), out_f = weight.size(0);
  if (weight.size(1) != in) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  if (bias && bias->shape() != Shape{out_f}) {
    throw ShapeError("linear: bias " + to_string(bias->shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  Tensor<T> out = Tensor<T>::zeros({batch, out_f});
  auto o = out.mutable_data();
  if (bias) {
    const auto bd = bias->data();
    for (std::size_t r = 0; r < batch; ++r) std::copy(bd.begin(), bd.end(), o.begin() + r * out_f);
  }
  k<T>().gemm(false, true, batch, out_f, in, T(1), x.data().data(), in, weight.data().data(), in,
              bias ? T(1) : T(0), o.data(), out_f);
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return record<T>("linear", out, inputs, [batch, in, out_f](const TapeNode<T>& node, BackwardContext<T>& ctx) {
    const T* g = ctx.grad_out.data();
    if (ctx.needs(0)) {  // dX = G W
      k<T>().gemm(false, false, batch, in, out_f, T(1), g, out_f, node.input_data(1).data(), in,
                  T(1), ctx.grad_in[0].data(), in);
    }
    if (ctx.needs(1)) {  // dW = G^T X
      k<T>().gemm(true, false, out_f, in, batch, T(1), g, out_f, node.input_data(0).data(), in,
                  T(1), ctx.grad_in[1].data(), in);
    }
    if (node.inputs.size() > 2 && ctx.needs(2)) {
      auto gb = ctx.grad_in[2];
      for (std::size_t r = 0; r < batch; ++r) {
        k<T>().axpy(T(1), g + r * out_f, gb.data(), out_f);
      }
    }
  });
}

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel,
                               const Conv2dParams& params) {
  if (params.stride == 0) throw ShapeError("conv stride must be positive");
  const std::size_t padded = extent + 2 * params.pad;
  if (kernel == 0 || kernel > padded) {
    throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds padded input extent " +
                     std::to_string(padded));
  }
  return (padded - kernel) / params.stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias, const Conv2dParams& params) {
  require_rank(x.shape(), 4, "conv2d");
  require_rank(weight.shape(), 4, "conv2d weight");
  const std::size_t batch = x.size(0), channels = x.size(1), h = x.size(2), w = x.size(3);
  const std::size_t filters = weight.size(0), kh = weight.size(2), kw = weight.size(3);
  if (weight.size(1) != channels) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  if (bias && bias->shape() != Shape{filters}) {
    throw ShapeError("conv2d: bias " + to_string(bias->shape()) + " does not match " +
                     std::to_string(filters) + " filters");
  }
  const std::size_t ho = conv_output_extent(h, kh, params);
  const std::size_t wo = conv_output_extent(w, kw, params);
  const std::size_t ck = channels * kh * kw;
  const std::size_t hw_out = ho * wo;

  Tensor<T> out = Tensor<T>::zeros({batch, filters, ho, wo});
  T* o = out.mutable_data().data();
  std::vector<T> col(ck * hw_out);
  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(xd + b * channels * h * w, channels, h, w, kh, kw, ho, wo, params, col.data(), hw_out);
    T* ob = o + b * filters * hw_out;
    if (bias) {
      const auto bd = bias->data();
      for (std::size_t f = 0; f < filters; ++f) std::fill(ob + f * hw_out, ob + (f + 1) * hw_out, bd[f]);
    }
    k<T>().gemm(false, false, filters, hw_out, ck, T(1), wd, ck, col.data(), hw_out,
                bias ? T(1) : T(0), ob, hw_out);
  }

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return record<T>("conv2d", out, inputs,
                   [=](const TapeNode<T>& node, BackwardContext<T>& ctx) {
    const T* g = ctx.grad_out.data();
    const T* xd = node.input_data(0).data();
    const T* wd = node.input_data(1).data();
    const bool need_x = ctx.needs(0);
    const bool need_w = ctx.needs(1);
    std::vector<T> col(need_w ? ck * hw_out : 0);
    std::vector<T> dcol(need_x ? ck * hw_out : 0);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* gb = g + b * filters * hw_out;
      if (need_w) {
        im2col(xd + b * channels * h * w, channels, h, w, kh, kw, ho, wo, params, col.data(), hw_out);
        k<T>().gemm(false, true, filters, ck, hw_out, T(1), gb, hw_out, col.data(), hw_out, T(1),
                    ctx.grad_in[1].data(), ck);
      }
      if (need_x) {
        k<T>().gemm(true, false, ck, hw_out, filters, T(1), wd, ck, gb, hw_out, T(0), dcol.data(),
                    hw_out);
        col2im_add(dcol.data(), channels, h, w, kh, kw, ho, wo, params,
                   ctx.grad_in[0].data() + b * channels * h * w, hw_out);
      }
    }
    if (node.inputs.size() > 2 && ctx.needs(2)) {
      auto gbias = ctx.grad_in[2];
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < filters; ++f) {
          const T* gf = g + (b * filters + f) * hw_out;
          T acc = T(0);
          for (std::size_t p = 0; p < hw_out; ++p) acc += gf[p];
          gbias[f] += acc;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t window) {
  require_rank(x.shape(), 4, "maxpool2d");
  if (window == 0) throw ShapeError("maxpool2d window must be positive");
  const std::size_t n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  const std::size_t ho = h / window, wo = w / window;
  if (ho == 0 || wo == 0) {
    throw ShapeError("maxpool2d window " + std::to_string(window) + " larger than input " +
                     to_string(x.shape()));
  }
  Tensor<T> out = Tensor<T>::zeros({n, c, ho, wo});
  auto o = out.mutable_data();
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(o.size());
  const auto xd = x.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = xd.data() + plane * h * w;
    if (window == 2) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const std::size_t r0 = 2 * oy * w, r1 = r0 + w;
        for (std::size_t ox = 0; ox < wo; ++ox) {
          std::size_t best = r0 + 2 * ox;
          if (src[r0 + 2 * ox + 1] > src[best]) best = r0 + 2 * ox + 1;
          if (src[r1 + 2 * ox] > src[best]) best = r1 + 2 * ox;
          if (src[r1 + 2 * ox + 1] > src[best]) best = r1 + 2 * ox + 1;
          const std::size_t flat = plane * ho * wo + oy * wo + ox;
          o[flat] = src[best];
          (*argmax)[flat] = static_cast<std::uint32_t>(best);
        }
      }
      continue;
    }
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (oy * window) * w + ox * window;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = (oy * window + i) * w + ox * window + j;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t flat = plane * ho * wo + oy * wo + ox;
        o[flat] = src[best];
        (*argmax)[flat] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return record<T>("maxpool2d", out, {x}, [argmax, h, w, ho, wo](const TapeNode<T>&, BackwardContext<T>& ctx) {
    if (!ctx.needs(0)) return;
    auto gx = ctx.grad_in[0];
    const std::size_t planes = ctx.grad_out.size() / (ho * wo);
    for (std::size_t plane = 0; plane < planes; ++plane) {
      for (std::size_t p = 0; p < ho * wo; ++p) {
        const std::size_t flat = plane * ho * wo + p;
        gx[plane * h * w + (*argmax)[flat]] += ctx.grad_out[flat];
      }
    }
  });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool");
  const std::size_t n = x.size(0), c = x.size(1), hw = x.size(2) * x.size(3);
  Tensor<T> out = Tensor<T>::zeros({n, c});
  auto o = out.mutable_data();
  const auto xd = x.data();
  const T scale = T(1) / static_cast<T>(hw);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    T acc = T(0);
    for (std::size_t p = 0; p < hw; ++p) acc += xd[plane * hw + p];
    o[plane] = acc * scale;
  }
  return record<T>("global_avg_pool", out, {x}, [hw, scale](const TapeNode<T>&, BackwardContext<T>& ctx) {
    if (!ctx.needs(0)) return;
    auto gx = ctx.grad_in[0];
    for (std::size_t plane = 0; plane < ctx.grad_out.size(); ++plane) {
      const T g = ctx.grad_out[plane] * scale;
      for (std::size_t p = 0; p < hw; ++p) gx[plane * hw + p] += g;
    }
  });
}

namespace {

// Plane reductions with eight independent partial sums so the loops pipeline;
// each plane's total is folded into a double.
template <typename T, typename F>
double lane_sum(std::size_t n, F term) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += term(i + l);
  }
  double total = 0.0;
  for (; i < n; ++i) total += term(i);
  for (std::size_t l = 0; l < 8; ++l) total += acc[l];
  return total;
}

}  // namespace

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var,
                     const BatchNormParams& params) {
  if (x.dim() < 2) throw ShapeError("batch_norm needs [N,C,...], got " + to_string(x.shape()));
  const std::size_t n = x.size(0), c = x.size(1);
  const std::size_t inner = x.numel() / (n * c);
  const std::size_t count = n * inner;
  const Shape cshape{c};
  if (gamma.shape() != cshape || beta.shape() != cshape || running_mean.shape() != cshape ||
      running_var.shape() != cshape) {
    throw ShapeError("batch_norm parameters must have shape " + to_string(cshape));
  }
  if (params.training && count < 2) {
    throw ValueError("batch_norm in training mode needs more than one value per channel, got input " +
                     to_string(x.shape()));
  }

  const T* xd = x.data().data();
  std::vector<T> mu(c), inv_std(c);
  if (params.training) {
    std::vector<double> sum(c, 0.0), ss(c, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = xd + (b * c + ch) * inner;
        sum[ch] += lane_sum<T>(inner, [p](std::size_t i) { return p[i]; });
      }
    }
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = xd + (b * c + ch) * inner;
        const T m = static_cast<T>(sum[ch] / static_cast<double>(count));
        ss[ch] += lane_sum<T>(inner, [p, m](std::size_t i) { return (p[i] - m) * (p[i] - m); });
      }
    }
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double m = sum[ch] / static_cast<double>(count);
      const double var = ss[ch] / static_cast<double>(count);
      mu[ch] = static_cast<T>(m);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + params.eps));
      const double unbiased = ss[ch] / static_cast<double>(count - 1);
      rm[ch] = static_cast<T>((1.0 - params.momentum) * rm[ch] + params.momentum * m);
      rv[ch] = static_cast<T>((1.0 - params.momentum) * rv[ch] + params.momentum * unbiased);
    }
  } else {
    const auto rm = running_mean.data();
    const auto rv = running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = rm[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[ch]) + params.eps));
    }
  }

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  T* o = out.mutable_data().data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = xd + (b * c + ch) * inner;
      T* q = o + (b * c + ch) * inner;
      const T scale = gd[ch] * inv_std[ch];
      const T shift = bd[ch] - mu[ch] * scale;
      for (std::size_t i = 0; i < inner; ++i) q[i] = p[i] * scale + shift;
    }
  }

  const bool training = params.training;
  return record<T>("batch_norm", out, {x, gamma, beta},
                   [=](const TapeNode<T>& node, BackwardContext<T>& ctx) {
    const T* xd = node.input_data(0).data();
    const auto gd = node.input_data(1);
    const T* g = ctx.grad_out.data();
    std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * inner;
        const T* gp = g + base;
        const T* xp = xd + base;
        const T m = mu[ch], is = inv_std[ch];
        sum_g[ch] += lane_sum<T>(inner, [gp](std::size_t i) { return gp[i]; });
        sum_gx[ch] += lane_sum<T>(inner, [gp, xp, m, is](std::size_t i) { return gp[i] * ((xp[i] - m) * is); });
      }
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      if (ctx.needs(1)) ctx.grad_in[1][ch] += static_cast<T>(sum_gx[ch]);
      if (ctx.needs(2)) ctx.grad_in[2][ch] += static_cast<T>(sum_g[ch]);
    }
    if (!ctx.needs(0)) return;
    T* gx = ctx.grad_in[0].data();
    const double inv_count = 1.0 / static_cast<double>(count);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T scale = gd[ch] * inv_std[ch];
      // gx += scale * (g - (sum_g + xhat * sum_gx) / count), xhat = (x - mu) * inv_std
      //     = a * g + k * x + d
      const T a = scale;
      const T k = training ? static_cast<T>(-scale * sum_gx[ch] * inv_count * inv_std[ch]) : T(0);
      const T d = training ? static_cast<T>(-scale * inv_count * (sum_g[ch] - mu[ch] * inv_std[ch] * sum_gx[ch]))
                           : T(0);
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t base = (b * c + ch) * inner;
        const T* gp = g + base;
        const T* xp = xd + base;
        T* q = gx + base;
        for (std::size_t i = 0; i < inner; ++i) q[i] += a * gp[i] + k * xp[i] + d;
      }
    }
  });
}

#define HAS8_INSTANTIATE(T)                                                                  \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                     \
  template Tensor<T> mul_scalar<T>(const Tensor<T>&, T);                                     \
  template Tensor<T> neg<T>(const Tensor<T>&);                                               \
  template Tensor<T> relu<T>(const Tensor<T>&);                                              \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                           \
  template Tensor<T> tanh<T>(const Tensor<T>&);                                              \
  template Tensor<T> exp<T>(const Tensor<T>&);                                               \
  template Tensor<T> log<T>(const Tensor<T>&);                                               \
  template Tensor<T> sin<T>(const Tensor<T>&);                                               \
  template Tensor<T> square<T>(const Tensor<T>&);                                            \
  template Tensor<T> clamp<T>(const Tensor<T>&, T, T);                                       \
  template Tensor<T> sum<T>(const Tensor<T>&);                                               \
  template Tensor<T> mean<T>(const Tensor<T>&);                                              \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                    \
  template Tensor<T> flatten<T>(const Tensor<T>&);                                           \
  template Tensor<T> select<T>(const Tensor<T>&, std::size_t);                               \
  template Tensor<T> stack<T>(const std::vector<Tensor<T>>&);                                \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&,                           \
                               const std::optional<Tensor<T>>&);                             \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&,                           \
                               const std::optional<Tensor<T>>&, const Conv2dParams&);        \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                   \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                   Tensor<T>&, Tensor<T>&, const BatchNormParams&);

HAS8_INSTANTIATE(float)
HAS8_INSTANTIATE(double)
#undef HAS8_INSTANTIATE

}  // namespace has8
