// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdlib>
#include <utility>
#include <vector>

#include "gshift/conv.hpp"

namespace gshift {

struct Offset {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

/// Displacement set for grouped spatial shift. Every channel slice gets one
/// (dx, dy) pair from D x D, enumerated row-major over (dy, dx).
struct ShiftSpec {
  std::vector<int> displacements{0};
  int base_length = 1;
  /// Shift by |d| - 1 and leave the last pixel to the 3x3 smoothing conv.
  bool pre_shift_reduction = true;

  int groups() const { return static_cast<int>(displacements.size() * displacements.size()); }
  int max_displacement() const {
    int m = 0;
    for (int d : displacements) m = std::max(m, std::abs(d));
    return m;
  }

  void validate() const {
    if (displacements.empty()) detail::fail("shift spec: displacement set is empty");
    if (base_length < 1) detail::fail("shift spec: base length must be positive, got ", base_length);
    if (!std::is_sorted(displacements.begin(), displacements.end()) ||
        std::adjacent_find(displacements.begin(), displacements.end()) != displacements.end())
      detail::fail("shift spec: displacements must be strictly increasing");
    if (std::find(displacements.begin(), displacements.end(), 0) == displacements.end())
      detail::fail("shift spec: displacements must contain 0");
    const std::size_t n = displacements.size();
    for (std::size_t i = 0; i < n; ++i) {
      const int d = displacements[i];
      if (d != -displacements[n - 1 - i]) detail::fail("shift spec: displacements must be symmetric about 0");
      if (d == 0) continue;
      const int mag = std::abs(d);
      const bool legal = base_length == 1 ? mag == 1 : (mag - 1) % (base_length - 1) == 0 && mag >= base_length;
      if (!legal)
        detail::fail("shift spec: |", d, "| is not k*(s-1)+1 with k >= 1 for base length s=", base_length);
    }
  }

  /// Nominal displacement of each group, row-major over (dy, dx).
  std::vector<Offset> group_offsets() const {
    std::vector<Offset> out;
    for (int dy : displacements)
      for (int dx : displacements) out.push_back({dx, dy});
    return out;
  }

  /// Displacement actually applied before smoothing.
  Offset applied(Offset o) const {
    if (!pre_shift_reduction) return o;
    auto reduce = [](int d) { return d > 0 ? d - 1 : d < 0 ? d + 1 : 0; };
    return {reduce(o.dx), reduce(o.dy)};
  }
};

namespace kernel {

// out(y, x) = in(y - dy, x - dx), zero where the source is outside the plane.
template <typename T>
void shift_plane(const T* in, T* out, int h, int w, int dx, int dy, bool accumulate) {
  if (!accumulate) std::fill(out, out + static_cast<std::size_t>(h) * w, T(0));
  const int y0 = std::max(0, dy), y1 = std::min(h, h + dy);
  const int x0 = std::max(0, dx), x1 = std::min(w, w + dx);
  for (int y = y0; y < y1; ++y) {
    T* orow = out + static_cast<std::size_t>(y) * w;
    const T* irow = in + static_cast<std::size_t>(y - dy) * w;
    if (accumulate)
      for (int x = x0; x < x1; ++x) orow[x] += irow[x - dx];
    else
      std::copy(irow + (x0 - dx), irow + (x1 - dx), orow + x0);
  }
}

}  // namespace kernel

/// Moves every channel c by offsets[c]; vacated pixels are zero.
template <typename T>
Var<T> shift_channels(const Var<T>& x, const std::vector<Offset>& offsets) {
  const Dims4 d = dims4(x.shape());
  if (offsets.size() != static_cast<std::size_t>(d.c))
    detail::fail("shift_channels: ", offsets.size(), " offsets for ", d.c, " channels");
  for (const Offset& o : offsets)
    if (std::abs(o.dx) >= d.w || std::abs(o.dy) >= d.h)
      detail::fail("spatial shift (", o.dx, ", ", o.dy, ") must be smaller than extent ", d.w, "x", d.h);
  Tensor<T> out(x.shape());
  for (int n = 0; n < d.n; ++n)
    for (int c = 0; c < d.c; ++c) {
      const std::size_t off = n * d.item() + c * d.plane();
      kernel::shift_plane(x.value().ptr() + off, out.ptr() + off, d.h, d.w, offsets[c].dx, offsets[c].dy, false);
    }
  return x.tape()->record(std::move(out), {x}, [d, offsets](BackwardContext<T>& ctx) {
    for (int n = 0; n < d.n; ++n)
      for (int c = 0; c < d.c; ++c) {
        const std::size_t off = n * d.item() + c * d.plane();
        kernel::shift_plane(ctx.grad_out.ptr() + off, ctx.grad_in[0]->ptr() + off, d.h, d.w, -offsets[c].dx,
                            -offsets[c].dy, true);
      }
  });
}

/// Content moves by (+dx, +dy); out-of-range reads are zero.
template <typename T>
Var<T> spatial_shift(const Var<T>& x, int dx, int dy) {
  return shift_channels(x, std::vector<Offset>(static_cast<std::size_t>(dims4(x.shape()).c), Offset{dx, dy}));
}

/// Per-channel applied offsets for the grouped shift of a `channels`-wide tensor.
inline std::vector<Offset> grouped_channel_offsets(const ShiftSpec& spec, int channels) {
  const int m = spec.groups();
  if (channels % m != 0)
    detail::fail("grouped spatial shift: propagated width ", channels, " is not divisible by M=", m);
  const int per = channels / m;
  std::vector<Offset> out;
  for (const Offset& g : spec.group_offsets())
    for (int i = 0; i < per; ++i) out.push_back(spec.applied(g));
  return out;
}

/// Shifts the M channel slices by their group displacement (no smoothing).
template <typename T>
Var<T> shift_groups(const Var<T>& x, const ShiftSpec& spec) {
  return shift_channels(x, grouped_channel_offsets(spec, dims4(x.shape()).c));
}

/// Grouped shift followed by one depthwise 3x3 smoothing conv
/// (smoothing_weight: [C, 1, 3, 3]).
template <typename T>
Var<T> grouped_spatial_shift(const Var<T>& x, const ShiftSpec& spec, const Var<T>& smoothing_weight) {
  const int c = dims4(x.shape()).c;
  return conv2d(shift_groups(x, spec), smoothing_weight, c, 1);
}

enum class Direction { forward, backward };

/// For frames laid out as N = clips * frames, item (b, t) receives item
/// (b, t - 1) (forward) or (b, t + 1) (backward); the missing neighbour at
/// a clip boundary is zero.
template <typename T>
Var<T> temporal_neighbor(const Var<T>& x, int frames, Direction dir) {
  const Dims4 d = dims4(x.shape());
  if (frames <= 0 || d.n % frames != 0)
    detail::fail("temporal_neighbor: ", d.n, " items are not a whole number of ", frames, "-frame clips");
  const int step = dir == Direction::forward ? -1 : 1;
  const std::size_t len = d.item();
  Tensor<T> out(x.shape());
  for (int n = 0; n < d.n; ++n) {
    const int t = n % frames + step;
    if (t < 0 || t >= frames) continue;
    std::copy_n(x.value().ptr() + (n + step) * len, len, out.ptr() + n * len);
  }
  return x.tape()->record(std::move(out), {x}, [d, frames, step, len](BackwardContext<T>& ctx) {
    for (int n = 0; n < d.n; ++n) {
      const int t = n % frames + step;
      if (t < 0 || t >= frames) continue;
      T* dst = ctx.grad_in[0]->ptr() + (n + step) * len;
      const T* src = ctx.grad_out.ptr() + n * len;
      for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
struct ShiftedPair {
  Var<T> kept;
  Var<T> incoming;
};

/// Splits each frame into kept / propagated halves and pairs the kept half
/// with the neighbour's propagated half (zeros at the sequence boundary).
template <typename T>
std::vector<ShiftedPair<T>> temporal_shift(const std::vector<Var<T>>& frames, Direction dir) {
  std::vector<ShiftedPair<T>> out;
  if (frames.empty()) return out;
  const int c = dims4(frames[0].shape()).c;
  if (c % 2 != 0) detail::fail("temporal_shift: channel count ", c, " must be even");
  const int half = c / 2;
  std::vector<Var<T>> kept, prop;
  for (const auto& f : frames) {
    kept.push_back(slice_channels(f, 0, half));
    prop.push_back(slice_channels(f, half, c));
  }
  const int n = static_cast<int>(frames.size());
  for (int i = 0; i < n; ++i) {
    const int j = dir == Direction::forward ? i - 1 : i + 1;
    Var<T> incoming = j >= 0 && j < n ? prop[j] : frames[i].tape()->constant(Tensor<T>(prop[i].shape()));
    out.push_back({kept[i], incoming});
  }
  return out;
}

}  // namespace gshift
