// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstring>
#include <optional>
#include <type_traits>
#include <vector>

#include "gshift/ops.hpp"

namespace gshift {

namespace kernel {

/// Geometry of a stride-1 grouped cross-correlation.
struct ConvGeometry {
  Dims4 in;
  Dims4 out;
  int k = 1;
  int groups = 1;
  int pad = 0;
  int cin_g() const { return in.c / groups; }
  int cout_g() const { return out.c / groups; }
};

// Planes are copied into a zero-padded buffer of row stride wp = W + 2 pad
// so each tap becomes one contiguous multiply-add over oh * wp entries.
// Columns >= ow of a strided output row are scratch and stay zero in the
// gradient buffers.
struct PaddedLayout {
  int hp, wp, ow, oh;
  std::size_t plane;  // padded plane length plus slack for the last tap
  std::size_t span;   // oh * wp
};

inline PaddedLayout padded_layout(const ConvGeometry& g) {
  const int hp = g.in.h + 2 * g.pad, wp = g.in.w + 2 * g.pad;
  return {hp, wp, g.out.w, g.out.h, static_cast<std::size_t>(hp) * wp + g.k,
          static_cast<std::size_t>(g.out.h) * wp};
}

// Dot product with a fixed 8-lane split so the compiler can vectorize it;
// the summation order depends only on n.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
  T s = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
void pad_planes(const ConvGeometry& g, const PaddedLayout& L, const T* in, std::vector<T>& buf) {
  // borders are never written, so a buffer reused for the same geometry stays valid
  const std::size_t size = static_cast<std::size_t>(g.in.c) * L.plane;
  if (buf.size() != size) buf.assign(size, T(0));
  for (int c = 0; c < g.in.c; ++c) {
    const T* src = in + static_cast<std::size_t>(c) * g.in.plane();
    T* dst = buf.data() + c * L.plane;
    for (int y = 0; y < g.in.h; ++y)
      std::copy_n(src + static_cast<std::size_t>(y) * g.in.w, g.in.w,
                  dst + static_cast<std::size_t>(y + g.pad) * L.wp + g.pad);
  }
}

// a[i] += sum over taps of w(ky, kx) * src[i + ky * wp + kx]. K = 0 reads the
// kernel size at run time; fixed K lets the tap loops unroll.
template <int K, typename T>
void forward_taps(T* a, const T* src, const T* wk, int k, int wp, std::size_t span) {
  const int kk = K > 0 ? K : k;
  T wv[K > 0 ? K * K : 1];
  if constexpr (K > 0) std::copy_n(wk, K * K, wv);
  for (std::size_t i = 0; i < span; ++i) {
    T s = a[i];
    for (int ky = 0; ky < kk; ++ky)
      for (int kx = 0; kx < kk; ++kx) s += (K > 0 ? wv[ky * kk + kx] : wk[ky * kk + kx]) * src[i + ky * wp + kx];
    a[i] = s;
  }
}

template <typename T>
struct Lanes8;
template <>
struct Lanes8<float> {
  typedef float type __attribute__((vector_size(32)));
};
template <>
struct Lanes8<double> {
  typedef double type __attribute__((vector_size(64)));
};

// gw(ky, kx) += sum_i gs[i] * src[i + ky * wp + kx], each tap reduced over a
// fixed 8-lane split.
template <int K, typename T>
void weight_taps(T* gw, const T* gs, const T* src, int k, int wp, std::size_t span) {
  if constexpr (K == 0) {
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) gw[ky * k + kx] += dot(gs, src + static_cast<std::size_t>(ky) * wp + kx, span);
  } else {
    using V = typename Lanes8<T>::type;
    V lane[K * K] = {};
    std::size_t i = 0;
    for (; i + 8 <= span; i += 8) {
      V a;
      std::memcpy(&a, gs + i, sizeof(V));
      for (int ky = 0; ky < K; ++ky)
        for (int kx = 0; kx < K; ++kx) {
          V b;
          std::memcpy(&b, src + i + static_cast<std::size_t>(ky) * wp + kx, sizeof(V));
          lane[ky * K + kx] += a * b;
        }
    }
    for (int t = 0; t < K * K; ++t) {
      T l[8];
      std::memcpy(l, &lane[t], sizeof(V));
      T r = ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]));
      const std::size_t off = static_cast<std::size_t>(t / K) * wp + t % K;
      for (std::size_t m = i; m < span; ++m) r += gs[m] * src[m + off];
      gw[t] += r;
    }
  }
}

template <typename F>
void dispatch_kernel_size(int k, F&& f) {
  switch (k) {
    case 1: f(std::integral_constant<int, 1>{}); break;
    case 3: f(std::integral_constant<int, 3>{}); break;
    case 5: f(std::integral_constant<int, 5>{}); break;
    case 7: f(std::integral_constant<int, 7>{}); break;
    default: f(std::integral_constant<int, 0>{}); break;
  }
}

template <typename T>
void conv_forward(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out) {
  const int cin_g = g.cin_g(), cout_g = g.cout_g(), k = g.k;
  const std::size_t pin = g.in.plane(), pout = g.out.plane();
  if (k == 1 && g.pad == 0) {
    for (int n = 0; n < g.out.n; ++n)
      for (int oc = 0; oc < g.out.c; ++oc) {
        T* op = out + (static_cast<std::size_t>(n) * g.out.c + oc) * pout;
        std::fill(op, op + pout, bias ? bias[oc] : T(0));
        const int grp = oc / cout_g;
        for (int icl = 0; icl < cin_g; ++icl) {
          const T* ip = in + (static_cast<std::size_t>(n) * g.in.c + grp * cin_g + icl) * pin;
          const T wv = w[static_cast<std::size_t>(oc) * cin_g + icl];
          for (std::size_t i = 0; i < pout; ++i) op[i] += wv * ip[i];
        }
      }
    return;
  }
  const PaddedLayout L = padded_layout(g);
  std::vector<T> padded, acc(L.span);
  dispatch_kernel_size(k, [&](auto kc) {
    constexpr int K = decltype(kc)::value;
    for (int n = 0; n < g.out.n; ++n) {
      pad_planes(g, L, in + static_cast<std::size_t>(n) * g.in.item(), padded);
      for (int oc = 0; oc < g.out.c; ++oc) {
        std::fill(acc.begin(), acc.end(), bias ? bias[oc] : T(0));
        const int grp = oc / cout_g;
        for (int icl = 0; icl < cin_g; ++icl)
          forward_taps<K>(acc.data(), padded.data() + (grp * cin_g + icl) * L.plane,
                          w + (static_cast<std::size_t>(oc) * cin_g + icl) * k * k, k, L.wp, L.span);
        T* op = out + (static_cast<std::size_t>(n) * g.out.c + oc) * pout;
        for (int y = 0; y < L.oh; ++y)
          std::copy_n(acc.data() + static_cast<std::size_t>(y) * L.wp, L.ow, op + static_cast<std::size_t>(y) * L.ow);
      }
    }
  });
}

// Input gradient as the correlation of gout (padded by k - 1 - pad) with the
// spatially flipped kernel, input and output channels swapped per group.
template <typename T>
void conv_forward(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out);

template <typename T>
void input_grad_transposed(const ConvGeometry& g, const T* w, const T* gout, T* gin) {
  const int cin_g = g.cin_g(), cout_g = g.cout_g(), k = g.k;
  const ConvGeometry t{g.out, g.in, k, g.groups, k - 1 - g.pad};
  std::vector<T> wt(static_cast<std::size_t>(g.in.c) * cout_g * k * k);
  for (int oc = 0; oc < g.out.c; ++oc)
    for (int icl = 0; icl < cin_g; ++icl) {
      const int grp = oc / cout_g, ocl = oc % cout_g, ic = grp * cin_g + icl;
      const T* src = w + (static_cast<std::size_t>(oc) * cin_g + icl) * k * k;
      T* dst = wt.data() + (static_cast<std::size_t>(ic) * cout_g + ocl) * k * k;
      for (int q = 0; q < k * k; ++q) dst[q] = src[k * k - 1 - q];
    }
  std::vector<T> tmp(static_cast<std::size_t>(g.in.n) * g.in.item());
  conv_forward(t, gout, wt.data(), static_cast<const T*>(nullptr), tmp.data());
  for (std::size_t i = 0; i < tmp.size(); ++i) gin[i] += tmp[i];
}

// Fallback for padding wider than the kernel reach (pad > k - 1).
template <typename T>
void input_grad_scatter(const ConvGeometry& g, const T* w, const T* gout, T* gin) {
  const int cin_g = g.cin_g(), cout_g = g.cout_g(), k = g.k;
  for (int n = 0; n < g.out.n; ++n)
    for (int oc = 0; oc < g.out.c; ++oc) {
      const T* go = gout + (static_cast<std::size_t>(n) * g.out.c + oc) * g.out.plane();
      const int grp = oc / cout_g;
      for (int icl = 0; icl < cin_g; ++icl) {
        T* gi = gin + (static_cast<std::size_t>(n) * g.in.c + grp * cin_g + icl) * g.in.plane();
        const T* wk = w + (static_cast<std::size_t>(oc) * cin_g + icl) * k * k;
        for (int y = 0; y < g.out.h; ++y)
          for (int x = 0; x < g.out.w; ++x)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = y + ky - g.pad, ix = x + kx - g.pad;
                if (iy < 0 || iy >= g.in.h || ix < 0 || ix >= g.in.w) continue;
                gi[static_cast<std::size_t>(iy) * g.in.w + ix] += wk[ky * k + kx] * go[y * g.out.w + x];
              }
      }
    }
}

/// Accumulates input, weight and bias gradients (any may be null).
template <typename T>
void conv_backward(const ConvGeometry& g, const T* in, const T* w, const T* gout, T* gin, T* gw, T* gb) {
  const int cin_g = g.cin_g(), cout_g = g.cout_g(), k = g.k;
  const std::size_t pin = g.in.plane(), pout = g.out.plane();
  if (gb)
    for (int n = 0; n < g.out.n; ++n)
      for (int oc = 0; oc < g.out.c; ++oc) {
        const T* go = gout + (static_cast<std::size_t>(n) * g.out.c + oc) * pout;
        T s = 0;
        for (std::size_t i = 0; i < pout; ++i) s += go[i];
        gb[oc] += s;
      }
  if (k == 1 && g.pad == 0) {
    for (int n = 0; n < g.out.n; ++n)
      for (int oc = 0; oc < g.out.c; ++oc) {
        const T* go = gout + (static_cast<std::size_t>(n) * g.out.c + oc) * pout;
        const int grp = oc / cout_g;
        for (int icl = 0; icl < cin_g; ++icl) {
          const std::size_t in_off = (static_cast<std::size_t>(n) * g.in.c + grp * cin_g + icl) * pin;
          const std::size_t w_off = static_cast<std::size_t>(oc) * cin_g + icl;
          if (gin) {
            T* gi = gin + in_off;
            const T wv = w[w_off];
            for (std::size_t i = 0; i < pout; ++i) gi[i] += wv * go[i];
          }
          if (gw) gw[w_off] += dot(go, in + in_off, pout);
        }
      }
    return;
  }
  if (gin) {
    if (g.pad <= k - 1)
      input_grad_transposed(g, w, gout, gin);
    else
      input_grad_scatter(g, w, gout, gin);
  }
  if (!gw) return;
  const PaddedLayout L = padded_layout(g);
  std::vector<T> padded, gstrided(L.span, T(0));
  dispatch_kernel_size(k, [&](auto kc) {
    constexpr int K = decltype(kc)::value;
    for (int n = 0; n < g.out.n; ++n) {
      pad_planes(g, L, in + static_cast<std::size_t>(n) * g.in.item(), padded);
      for (int oc = 0; oc < g.out.c; ++oc) {
        const T* go = gout + (static_cast<std::size_t>(n) * g.out.c + oc) * pout;
        for (int y = 0; y < L.oh; ++y)
          std::copy_n(go + static_cast<std::size_t>(y) * L.ow, L.ow,
                      gstrided.data() + static_cast<std::size_t>(y) * L.wp);
        const int grp = oc / cout_g;
        for (int icl = 0; icl < cin_g; ++icl)
          weight_taps<K>(gw + (static_cast<std::size_t>(oc) * cin_g + icl) * k * k, gstrided.data(),
                         padded.data() + (grp * cin_g + icl) * L.plane, k, L.wp, L.span);
      }
    }
  });
}

}  // namespace kernel

/// Stride-1 grouped cross-correlation with zero padding.
/// weight: [C_out, C_in / groups, k, k]; bias: [C_out].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias, int groups,
              int padding) {
  const Dims4 in = dims4(x.shape());
  const Shape& ws = weight.shape();
  if (ws.size() != 4 || ws[2] != ws[3])
    detail::fail("conv2d: weight must be [C_out, C_in/g, k, k], got ", to_string(ws));
  if (groups <= 0) detail::fail("conv2d: groups must be positive, got ", groups);
  if (padding < 0) detail::fail("conv2d: padding must be non-negative, got ", padding);
  if (in.c % groups != 0 || ws[0] % groups != 0)
    detail::fail("conv2d: C_in=", in.c, " and C_out=", ws[0], " must be divisible by groups=", groups);
  if (ws[1] != in.c / groups)
    detail::fail("conv2d: weight expects ", ws[1], " input channels per group, input has ", in.c,
                 " channels in ", groups, " groups");
  const int k = ws[2];
  const int oh = in.h + 2 * padding - k + 1, ow = in.w + 2 * padding - k + 1;
  if (oh <= 0 || ow <= 0)
    detail::fail("conv2d: kernel ", k, " too large for ", in.h, "x", in.w, " input with padding ", padding);
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != ws[0]))
    detail::fail("conv2d: bias must have ", ws[0], " entries, got ", to_string(bias->shape()));

  kernel::ConvGeometry g{in, Dims4{in.n, ws[0], oh, ow}, k, groups, padding};
  Shape out_shape = with_spatial(with_channels(x.shape(), ws[0]), oh, ow);
  Tensor<T> out(out_shape);
  kernel::conv_forward(g, x.value().ptr(), weight.value().ptr(), bias ? bias->value().ptr() : nullptr,
                       out.ptr());
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return x.tape()->record(std::move(out), inputs, [g](BackwardContext<T>& ctx) {
    T* gb = ctx.grad_in.size() > 2 && ctx.grad_in[2] ? ctx.grad_in[2]->ptr() : nullptr;
    kernel::conv_backward(g, ctx.in[0]->ptr(), ctx.in[1]->ptr(), ctx.grad_out.ptr(),
                          ctx.grad_in[0] ? ctx.grad_in[0]->ptr() : nullptr,
                          ctx.grad_in[1] ? ctx.grad_in[1]->ptr() : nullptr, gb);
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, int groups, int padding) {
  return conv2d(x, weight, std::optional<Var<T>>{}, groups, padding);
}

/// 1x1 convolution mixing channels; weight [C_out, C_in, 1, 1].
template <typename T>
Var<T> pointwise_conv(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias = {}) {
  const Shape& ws = weight.shape();
  if (ws.size() != 4 || ws[2] != 1 || ws[3] != 1)
    detail::fail("pointwise_conv: weight must be [C_out, C_in, 1, 1], got ", to_string(ws));
  return conv2d(x, weight, bias, 1, 0);
}

/// Multiply-accumulate count of one stride-1 "same" convolution per item.
inline long long conv_macs(int cin, int cout, int k, int groups, int h, int w) {
  return static_cast<long long>(cout) * (cin / groups) * k * k * h * w;
}

}  // namespace gshift
