// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "gshift/modules.hpp"
#include "gshift/shift.hpp"

namespace gshift {

enum class TemporalMode {
  alternating,        // FTS and BTS blocks alternate
  forward_only,       // every block is FTS
  tsm_bidirectional,  // 3/4 current + 1/8 previous + 1/8 next, all at once
  none,               // propagated half comes from the same frame
};

enum class SpatialMode {
  grouped_shift,
  none,  // no shifted branch; only the fusion kernel provides spatial reach
};

struct GstsOptions {
  ShiftSpec spec;
  TemporalMode temporal = TemporalMode::alternating;
  SpatialMode spatial = SpatialMode::grouped_shift;
  /// 0 selects the default: the base shift length (rounded up to odd) with
  /// grouped shift, 3 without.
  int fusion_kernel = 0;
  bool reparam_fusion = true;
  bool reparam_smoothing = true;

  int effective_fusion_kernel() const {
    if (fusion_kernel > 0) return fusion_kernel;
    if (spatial == SpatialMode::none) return 3;
    return spec.base_length % 2 == 1 ? spec.base_length : spec.base_length + 1;
  }
};

/// Lightweight fusion block: layer norm, pointwise expand, parallel small and
/// large depthwise convs, gate, channel attention, pointwise expand, gate,
/// pointwise projection.
template <typename T>
class FusionConv {
 public:
  FusionConv() = default;
  FusionConv(ParamStore<T>& store, const std::string& name, int cin, int cout, int k, bool residual, bool reparam)
      : cin_(cin), cout_(cout), residual_(residual),
        norm_(store, name + ".norm", cin),
        expand_(store, name + ".pw1", cin, 2 * cout, 1),
        dw_small_(store, name + ".dw3", 2 * cout, 3, reparam),
        dw_large_(store, name + ".dwk", 2 * cout, k, reparam),
        ca_(store, name + ".ca", cout),
        mix_(store, name + ".pw2", cout, 2 * cout, 1),
        project_(store, name + ".pw3", cout, cout, 1) {
    if (residual && cin != cout) detail::fail("residual FusionConv needs equal widths, got ", cin, " -> ", cout);
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    Var<T> u = expand_(tape, norm_(tape, x));
    u = add(dw_small_(tape, u), dw_large_(tape, u));
    Var<T> g = ca_(tape, simple_gate(u));
    g = simple_gate(mix_(tape, g));
    Var<T> y = project_(tape, g);
    return residual_ ? add(x, y) : y;
  }

  long long macs(int h, int w) const {
    return expand_.macs(h, w) + dw_small_.macs(h, w) + dw_large_.macs(h, w) + mix_.macs(h, w) + project_.macs(h, w);
  }

  bool merge(ParamStore<T>& store) {
    const bool a = dw_small_.merge(store);
    const bool b = dw_large_.merge(store);
    return a || b;
  }

 private:
  int cin_ = 0, cout_ = 0;
  bool residual_ = false;
  LayerNorm<T> norm_;
  Conv<T> expand_;
  DepthwiseConv<T> dw_small_, dw_large_;
  ChannelAttention<T> ca_;
  Conv<T> mix_, project_;
};

/// Intermediate tensors of one block, captured for attribution.
template <typename T>
struct GstsTrace {
  Var<T> shifted;  // grouped-shifted incoming half, before smoothing
  bool cross_frame = false;
  Direction direction = Direction::forward;  // source of the incoming half
  bool captured = false;
};

/// Grouped spatial-temporal shift block operating on N = clips * frames items.
template <typename T>
class GstsBlock {
 public:
  GstsBlock() = default;
  GstsBlock(ParamStore<T>& store, const std::string& name, int width, Direction dir, const GstsOptions& opt)
      : width_(width), dir_(dir), opt_(opt) {
    const bool tsm = opt.temporal == TemporalMode::tsm_bidirectional;
    if (tsm ? width % 8 != 0 : width % 2 != 0)
      detail::fail("GSTS block width ", width, tsm ? " must be divisible by 8" : " must be even");
    kept_ = tsm ? 3 * width / 4 : width / 2;
    incoming_ = width - kept_;
    const int k = opt.effective_fusion_kernel();
    int fusion_in = kept_ + incoming_;
    if (opt.spatial == SpatialMode::grouped_shift) {
      opt.spec.validate();
      grouped_channel_offsets(opt.spec, incoming_);  // divisibility check
      smoothing_ = DepthwiseConv<T>(store, name + ".smooth", incoming_, 3, opt.reparam_smoothing);
      init_smoothing();
      fusion_in += incoming_;
    }
    fusion1_ = FusionConv<T>(store, name + ".fuse1", fusion_in, width, k, false, opt.reparam_fusion);
    fusion2_ = FusionConv<T>(store, name + ".fuse2", width, width, k, true, opt.reparam_fusion);
  }

  /// x: [clips * frames, width, H, W].
  Var<T> operator()(Tape<T>& tape, const Var<T>& x, int frames, GstsTrace<T>* trace = nullptr) const {
    if (dims4(x.shape()).c != width_)
      detail::fail("GSTS block expects ", width_, " channels, got ", dims4(x.shape()).c);
    const Var<T> kept = slice_channels(x, 0, kept_);
    Var<T> incoming;
    if (opt_.temporal == TemporalMode::tsm_bidirectional) {
      const int eighth = width_ / 8;
      incoming = concat_channels<T>(
          {temporal_neighbor(slice_channels(x, kept_, kept_ + eighth), frames, Direction::forward),
           temporal_neighbor(slice_channels(x, kept_ + eighth, width_), frames, Direction::backward)});
    } else {
      incoming = slice_channels(x, kept_, width_);
      if (opt_.temporal != TemporalMode::none) incoming = temporal_neighbor(incoming, frames, dir_);
    }
    const Var<T> shortcut = concat_channels<T>({kept, incoming});
    Var<T> fusion_in = shortcut;
    if (opt_.spatial == SpatialMode::grouped_shift) {
      const Var<T> shifted = shift_groups(incoming, opt_.spec);
      if (trace && !trace->captured) {
        trace->shifted = shifted;
        trace->cross_frame = opt_.temporal != TemporalMode::none;
        trace->direction = dir_;
        trace->captured = true;
      }
      fusion_in = concat_channels<T>({kept, incoming, smoothing_(tape, shifted)});
    }
    return add(shortcut, fusion2_(tape, fusion1_(tape, fusion_in)));
  }

  long long macs(int h, int w) const {
    long long m = fusion1_.macs(h, w) + fusion2_.macs(h, w);
    if (opt_.spatial == SpatialMode::grouped_shift) m += smoothing_.macs(h, w);
    return m;
  }

  bool merge(ParamStore<T>& store) {
    bool merged = false;
    if (opt_.spatial == SpatialMode::grouped_shift && opt_.reparam_smoothing) merged = smoothing_.merge(store) || merged;
    merged = fusion1_.merge(store) || merged;
    merged = fusion2_.merge(store) || merged;
    return merged;
  }

  Direction direction() const noexcept { return dir_; }
  int width() const noexcept { return width_; }

 private:
  // The smoothing kernel of each group starts as a unit impulse at the
  // residual offset, so the group's total displacement equals its nominal one.
  void init_smoothing() {
    const auto offsets = opt_.spec.group_offsets();
    const int per = incoming_ / opt_.spec.groups();
    for (std::size_t g = 0; g < offsets.size(); ++g) {
      const Offset applied = opt_.spec.applied(offsets[g]);
      const int rx = offsets[g].dx - applied.dx, ry = offsets[g].dy - applied.dy;
      // out(y, x) = sum k(ky, kx) in(y + ky - 1, x + kx - 1): content moves
      // by (+rx, +ry) when the impulse sits at (1 - ry, 1 - rx).
      std::vector<T> kernel(9, T(0));
      kernel[(1 - ry) * 3 + (1 - rx)] = T(1);
      for (int i = 0; i < per; ++i) smoothing_.set_effective_kernel(static_cast<int>(g) * per + i, kernel);
    }
  }

  int width_ = 0, kept_ = 0, incoming_ = 0;
  Direction dir_ = Direction::forward;
  GstsOptions opt_;
  DepthwiseConv<T> smoothing_;
  FusionConv<T> fusion1_, fusion2_;
};

}  // namespace gshift
