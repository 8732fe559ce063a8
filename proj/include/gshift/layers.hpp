// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "gshift/ops.hpp"

namespace gshift {

/// 2x2 mean pooling.
template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
  const Dims4 d = dims4(x.shape());
  if (d.h % 2 != 0 || d.w % 2 != 0)
    detail::fail("avg_pool2: spatial extent ", d.h, "x", d.w, " must be even");
  const int oh = d.h / 2, ow = d.w / 2;
  Tensor<T> out(with_spatial(x.shape(), oh, ow));
  const T* in = x.value().ptr();
  T* o = out.ptr();
  const std::size_t planes = static_cast<std::size_t>(d.n) * d.c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* ip = in + p * d.plane();
    T* op = o + p * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xo = 0; xo < ow; ++xo) {
        const T* a = ip + (2 * y) * d.w + 2 * xo;
        op[y * ow + xo] = T(0.25) * (a[0] + a[1] + a[d.w] + a[d.w + 1]);
      }
  }
  return x.tape()->record(std::move(out), {x}, [d, oh, ow, planes](BackwardContext<T>& ctx) {
    for (std::size_t p = 0; p < planes; ++p) {
      T* gp = ctx.grad_in[0]->ptr() + p * d.plane();
      const T* go = ctx.grad_out.ptr() + p * oh * ow;
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) {
          const T g = T(0.25) * go[y * ow + xo];
          T* a = gp + (2 * y) * d.w + 2 * xo;
          a[0] += g;
          a[1] += g;
          a[d.w] += g;
          a[d.w + 1] += g;
        }
    }
  });
}

namespace detail {

// Half-pixel-centre sampling taps for 2x upsampling along one axis.
struct UpTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

inline UpTaps up2_taps(int len) {
  UpTaps t;
  for (int o = 0; o < 2 * len; ++o) {
    double src = (o + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    const int lo = static_cast<int>(src);
    t.lo.push_back(lo);
    t.hi.push_back(std::min(lo + 1, len - 1));
    t.frac.push_back(src - lo);
  }
  return t;
}

}  // namespace detail

/// 2x bilinear upsampling, half-pixel centres, clamped borders.
template <typename T>
Var<T> bilinear_up2(const Var<T>& x) {
  const Dims4 d = dims4(x.shape());
  if (d.h < 1 || d.w < 1) detail::fail("bilinear_up2: empty input");
  const int oh = 2 * d.h, ow = 2 * d.w;
  const auto ty = detail::up2_taps(d.h), tx = detail::up2_taps(d.w);
  Tensor<T> out(with_spatial(x.shape(), oh, ow));
  const std::size_t planes = static_cast<std::size_t>(d.n) * d.c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* ip = x.value().ptr() + p * d.plane();
    T* op = out.ptr() + p * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const T fy = static_cast<T>(ty.frac[y]);
      const T* r0 = ip + ty.lo[y] * d.w;
      const T* r1 = ip + ty.hi[y] * d.w;
      for (int xo = 0; xo < ow; ++xo) {
        const T fx = static_cast<T>(tx.frac[xo]);
        const T top = (1 - fx) * r0[tx.lo[xo]] + fx * r0[tx.hi[xo]];
        const T bot = (1 - fx) * r1[tx.lo[xo]] + fx * r1[tx.hi[xo]];
        op[y * ow + xo] = (1 - fy) * top + fy * bot;
      }
    }
  }
  return x.tape()->record(std::move(out), {x}, [d, oh, ow, ty, tx, planes](BackwardContext<T>& ctx) {
    for (std::size_t p = 0; p < planes; ++p) {
      T* gp = ctx.grad_in[0]->ptr() + p * d.plane();
      const T* go = ctx.grad_out.ptr() + p * oh * ow;
      for (int y = 0; y < oh; ++y) {
        const T fy = static_cast<T>(ty.frac[y]);
        T* r0 = gp + ty.lo[y] * d.w;
        T* r1 = gp + ty.hi[y] * d.w;
        for (int xo = 0; xo < ow; ++xo) {
          const T fx = static_cast<T>(tx.frac[xo]);
          const T g = go[y * ow + xo];
          r0[tx.lo[xo]] += (1 - fy) * (1 - fx) * g;
          r0[tx.hi[xo]] += (1 - fy) * fx * g;
          r1[tx.lo[xo]] += fy * (1 - fx) * g;
          r1[tx.hi[xo]] += fy * fx * g;
        }
      }
    }
  });
}

/// Normalizes across channels at every pixel, then applies a per-channel
/// affine map. gamma, beta: [C].
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-6)) {
  const Dims4 d = dims4(x.shape());
  if (!(eps > 0)) detail::fail("layer_norm: eps must be positive");
  if (gamma.value().size() != static_cast<std::size_t>(d.c) || beta.value().size() != static_cast<std::size_t>(d.c))
    detail::fail("layer_norm: affine parameters must have ", d.c, " entries");
  const std::size_t plane = d.plane();
  Tensor<T> out(x.shape());
  std::vector<T> mu(static_cast<std::size_t>(d.n) * plane), rstd(mu.size());
  const T* in = x.value().ptr();
  const T* ga = gamma.value().ptr();
  const T* be = beta.value().ptr();
  for (int n = 0; n < d.n; ++n) {
    const T* xn = in + n * d.item();
    T* on = out.ptr() + n * d.item();
    for (std::size_t i = 0; i < plane; ++i) {
      T m = 0;
      for (int c = 0; c < d.c; ++c) m += xn[c * plane + i];
      m /= d.c;
      T v = 0;
      for (int c = 0; c < d.c; ++c) {
        const T t = xn[c * plane + i] - m;
        v += t * t;
      }
      v /= d.c;
      const T r = T(1) / std::sqrt(v + eps);
      mu[n * plane + i] = m;
      rstd[n * plane + i] = r;
      for (int c = 0; c < d.c; ++c) on[c * plane + i] = (xn[c * plane + i] - m) * r * ga[c] + be[c];
    }
  }
  return x.tape()->record(std::move(out), {x, gamma, beta},
                          [d, mu = std::move(mu), rstd = std::move(rstd)](BackwardContext<T>& ctx) {
    const std::size_t plane = d.plane();
    const T* in = ctx.in[0]->ptr();
    const T* ga = ctx.in[1]->ptr();
    const T* go = ctx.grad_out.ptr();
    T* gx = ctx.grad_in[0] ? ctx.grad_in[0]->ptr() : nullptr;
    T* gg = ctx.grad_in[1] ? ctx.grad_in[1]->ptr() : nullptr;
    T* gbt = ctx.grad_in[2] ? ctx.grad_in[2]->ptr() : nullptr;
    std::vector<T> xhat(d.c), gh(d.c);
    for (int n = 0; n < d.n; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        const T m = mu[n * plane + i], r = rstd[n * plane + i];
        T mean_g = 0, mean_gx = 0;
        for (int c = 0; c < d.c; ++c) {
          const std::size_t idx = n * d.item() + c * plane + i;
          xhat[c] = (in[idx] - m) * r;
          gh[c] = go[idx] * ga[c];
          mean_g += gh[c];
          mean_gx += gh[c] * xhat[c];
          if (gg) gg[c] += go[idx] * xhat[c];
          if (gbt) gbt[c] += go[idx];
        }
        if (!gx) continue;
        mean_g /= d.c;
        mean_gx /= d.c;
        for (int c = 0; c < d.c; ++c)
          gx[n * d.item() + c * plane + i] += r * (gh[c] - mean_g - xhat[c] * mean_gx);
      }
    }
  });
}

/// Splits channels in half and multiplies the halves elementwise.
template <typename T>
Var<T> simple_gate(const Var<T>& x) {
  const Dims4 d = dims4(x.shape());
  if (d.c % 2 != 0) detail::fail("simple_gate: channel count ", d.c, " must be even");
  const int half = d.c / 2;
  const std::size_t len = static_cast<std::size_t>(half) * d.plane();
  Tensor<T> out(with_channels(x.shape(), half));
  for (int n = 0; n < d.n; ++n) {
    const T* a = x.value().ptr() + n * d.item();
    const T* b = a + len;
    T* o = out.ptr() + n * len;
    for (std::size_t i = 0; i < len; ++i) o[i] = a[i] * b[i];
  }
  return x.tape()->record(std::move(out), {x}, [d, len](BackwardContext<T>& ctx) {
    for (int n = 0; n < d.n; ++n) {
      const T* a = ctx.in[0]->ptr() + n * d.item();
      const T* b = a + len;
      T* ga = ctx.grad_in[0]->ptr() + n * d.item();
      T* gb = ga + len;
      const T* go = ctx.grad_out.ptr() + n * len;
      for (std::size_t i = 0; i < len; ++i) {
        ga[i] += go[i] * b[i];
        gb[i] += go[i] * a[i];
      }
    }
  });
}

/// Global average pool -> linear map over channels -> per-channel rescale.
/// weight: [C, C] (row = output channel); bias: [C].
/// If the tape detaches pooling, the scale vector is treated as constant.
template <typename T>
Var<T> channel_attention(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias = {}) {
  const Dims4 d = dims4(x.shape());
  const Shape& ws = weight.shape();
  const bool square = (ws.size() == 2 && ws[0] == d.c && ws[1] == d.c) ||
                      (ws.size() == 4 && ws[0] == d.c && ws[1] == d.c && ws[2] == 1 && ws[3] == 1);
  if (!square) detail::fail("channel_attention: weight must be ", d.c, "x", d.c, ", got ", to_string(ws));
  if (bias && bias->value().size() != static_cast<std::size_t>(d.c))
    detail::fail("channel_attention: bias must have ", d.c, " entries");
  const std::size_t plane = d.plane();
  const T* in = x.value().ptr();
  const T* w = weight.value().ptr();
  std::vector<T> pooled(static_cast<std::size_t>(d.n) * d.c), s(pooled.size());
  Tensor<T> out(x.shape());
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      const T* p = in + n * d.item() + c * plane;
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      pooled[n * d.c + c] = acc / static_cast<T>(plane);
    }
    for (int o = 0; o < d.c; ++o) {
      T acc = bias ? bias->value()[o] : T(0);
      for (int c = 0; c < d.c; ++c) acc += w[o * d.c + c] * pooled[n * d.c + c];
      s[n * d.c + o] = acc;
    }
    for (int c = 0; c < d.c; ++c) {
      const T sc = s[n * d.c + c];
      const T* p = in + n * d.item() + c * plane;
      T* q = out.ptr() + n * d.item() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) q[i] = p[i] * sc;
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const bool detached = x.tape()->detach_pooling();
  return x.tape()->record(std::move(out), inputs,
                          [d, detached, pooled = std::move(pooled), s = std::move(s)](BackwardContext<T>& ctx) {
    const std::size_t plane = d.plane();
    const T* in = ctx.in[0]->ptr();
    const T* w = ctx.in[1]->ptr();
    const T* go = ctx.grad_out.ptr();
    T* gx = ctx.grad_in[0] ? ctx.grad_in[0]->ptr() : nullptr;
    T* gw = ctx.grad_in[1] ? ctx.grad_in[1]->ptr() : nullptr;
    T* gb = ctx.grad_in.size() > 2 && ctx.grad_in[2] ? ctx.grad_in[2]->ptr() : nullptr;
    std::vector<T> gs(d.c), gp(d.c);
    for (int n = 0; n < d.n; ++n) {
      for (int c = 0; c < d.c; ++c) {
        const T* p = in + n * d.item() + c * plane;
        const T* g = go + n * d.item() + c * plane;
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += g[i] * p[i];
        gs[c] = acc;
        if (gx) {
          T* q = gx + n * d.item() + c * plane;
          const T sc = s[n * d.c + c];
          for (std::size_t i = 0; i < plane; ++i) q[i] += g[i] * sc;
        }
      }
      for (int o = 0; o < d.c; ++o) {
        if (gb) gb[o] += gs[o];
        if (gw)
          for (int c = 0; c < d.c; ++c) gw[o * d.c + c] += gs[o] * pooled[n * d.c + c];
      }
      if (!gx || detached) continue;
      for (int c = 0; c < d.c; ++c) {
        T acc = 0;
        for (int o = 0; o < d.c; ++o) acc += w[o * d.c + c] * gs[o];
        gp[c] = acc / static_cast<T>(plane);
      }
      for (int c = 0; c < d.c; ++c) {
        T* q = gx + n * d.item() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) q[i] += gp[c];
      }
    }
  });
}

}  // namespace gshift
