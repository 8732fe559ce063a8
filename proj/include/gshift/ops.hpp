// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "gshift/tape.hpp"

namespace gshift {

namespace detail {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape())
    fail(op, ": shape mismatch ", to_string(a.shape()), " vs ", to_string(b.shape()));
}

template <typename T>
void accumulate(Tensor<T>* dst, const Tensor<T>& src, T scale = T(1)) {
  if (!dst) return;
  T* d = dst->ptr();
  const T* s = src.ptr();
  for (std::size_t i = 0, n = src.size(); i < n; ++i) d[i] += scale * s[i];
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  return a.tape()->record(std::move(out), {a, b}, [](BackwardContext<T>& ctx) {
    detail::accumulate(ctx.grad_in[0], ctx.grad_out);
    detail::accumulate(ctx.grad_in[1], ctx.grad_out);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
  return a.tape()->record(std::move(out), {a, b}, [](BackwardContext<T>& ctx) {
    detail::accumulate(ctx.grad_in[0], ctx.grad_out);
    detail::accumulate(ctx.grad_in[1], ctx.grad_out, T(-1));
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
  return a.tape()->record(std::move(out), {a, b}, [](BackwardContext<T>& ctx) {
    const Tensor<T>& g = ctx.grad_out;
    if (auto* ga = ctx.grad_in[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (*ctx.in[1])[i];
    if (auto* gb = ctx.grad_in[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * (*ctx.in[0])[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return a.tape()->record(std::move(out), {a}, [s](BackwardContext<T>& ctx) {
    detail::accumulate(ctx.grad_in[0], ctx.grad_out, s);
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().data()) acc += v;
  return a.tape()->record(Tensor<T>({1}, acc), {a}, [](BackwardContext<T>& ctx) {
    const T g = ctx.grad_out[0];
    for (auto& v : ctx.grad_in[0]->data()) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  if (a.value().empty()) detail::fail("mean of an empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

/// Exact (erf) GELU.
template <typename T>
Var<T> gelu(const Var<T>& a) {
  Tensor<T> out = a.value();
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (auto& v : out.data()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  return a.tape()->record(std::move(out), {a}, [inv_sqrt2](BackwardContext<T>& ctx) {
    const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    const Tensor<T>& x = *ctx.in[0];
    Tensor<T>& gx = *ctx.grad_in[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T v = x[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      gx[i] += ctx.grad_out[i] * (cdf + v * pdf);
    }
  });
}

/// Concatenates 3-D or 4-D tensors along the channel axis.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) detail::fail("concat_channels: no inputs");
  const Dims4 d0 = dims4(parts[0].shape());
  int total = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    const Dims4 d = dims4(p.shape());
    if (d.n != d0.n || d.h != d0.h || d.w != d0.w || p.shape().size() != parts[0].shape().size())
      detail::fail("concat_channels: incompatible shapes ", to_string(parts[0].shape()), " and ",
                   to_string(p.shape()));
    widths.push_back(d.c);
    total += d.c;
  }
  Tensor<T> out(with_channels(parts[0].shape(), total));
  const std::size_t plane = d0.plane();
  for (int n = 0; n < d0.n; ++n) {
    T* dst = out.ptr() + static_cast<std::size_t>(n) * total * plane;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const std::size_t len = static_cast<std::size_t>(widths[k]) * plane;
      const T* src = parts[k].value().ptr() + n * len;
      std::copy(src, src + len, dst);
      dst += len;
    }
  }
  return parts[0].tape()->record(std::move(out), parts, [widths, total, d0](BackwardContext<T>& ctx) {
    const std::size_t plane = d0.plane();
    for (int n = 0; n < d0.n; ++n) {
      const T* src = ctx.grad_out.ptr() + static_cast<std::size_t>(n) * total * plane;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        const std::size_t len = static_cast<std::size_t>(widths[k]) * plane;
        if (Tensor<T>* g = ctx.grad_in[k]) {
          T* dst = g->ptr() + n * len;
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        src += len;
      }
    }
  });
}

/// Channels [begin, end) of a 3-D or 4-D tensor.
template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int end) {
  const Dims4 d = dims4(x.shape());
  if (begin < 0 || end > d.c || begin >= end)
    detail::fail("slice_channels: range [", begin, ", ", end, ") invalid for ", d.c, " channels");
  const int width = end - begin;
  Tensor<T> out(with_channels(x.shape(), width));
  const std::size_t plane = d.plane();
  for (int n = 0; n < d.n; ++n) {
    const T* src = x.value().ptr() + (static_cast<std::size_t>(n) * d.c + begin) * plane;
    std::copy(src, src + width * plane, out.ptr() + static_cast<std::size_t>(n) * width * plane);
  }
  return x.tape()->record(std::move(out), {x}, [d, begin, width](BackwardContext<T>& ctx) {
    const std::size_t plane = d.plane();
    for (int n = 0; n < d.n; ++n) {
      T* dst = ctx.grad_in[0]->ptr() + (static_cast<std::size_t>(n) * d.c + begin) * plane;
      const T* src = ctx.grad_out.ptr() + static_cast<std::size_t>(n) * width * plane;
      for (std::size_t i = 0; i < width * plane; ++i) dst[i] += src[i];
    }
  });
}

/// Splits channels into `parts` equal slices.
template <typename T>
std::vector<Var<T>> split_channels(const Var<T>& x, int parts) {
  const int c = dims4(x.shape()).c;
  if (parts <= 0 || c % parts != 0)
    detail::fail("split_channels: ", c, " channels not divisible into ", parts, " parts");
  std::vector<Var<T>> out;
  const int w = c / parts;
  for (int i = 0; i < parts; ++i) out.push_back(slice_channels(x, i * w, (i + 1) * w));
  return out;
}

/// Selects items along N (the frame axis). Used to pick frames out of a batch.
template <typename T>
Var<T> select_items(const Var<T>& x, const std::vector<int>& items) {
  const Dims4 d = dims4(x.shape());
  const std::size_t len = d.item();
  Shape s = x.shape();
  if (s.size() != 4) detail::fail("select_items needs a 4-D tensor");
  s[0] = static_cast<int>(items.size());
  Tensor<T> out(s);
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (items[k] < 0 || items[k] >= d.n) detail::fail("select_items: index ", items[k], " out of range");
    std::copy_n(x.value().ptr() + items[k] * len, len, out.ptr() + k * len);
  }
  return x.tape()->record(std::move(out), {x}, [items, len](BackwardContext<T>& ctx) {
    for (std::size_t k = 0; k < items.size(); ++k) {
      T* dst = ctx.grad_in[0]->ptr() + items[k] * len;
      const T* src = ctx.grad_out.ptr() + k * len;
      for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

}  // namespace gshift
