// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gshift/gsts.hpp"
#include "gshift/net.hpp"
#include "gshift/video.hpp"

namespace gshift {

/// Inclusive pixel bounds; empty when no pixel qualified.
struct SupportBox {
  int y0 = 0, y1 = -1, x0 = 0, x1 = -1;

  bool empty() const noexcept { return y1 < y0 || x1 < x0; }
  int height() const noexcept { return empty() ? 0 : y1 - y0 + 1; }
  int width() const noexcept { return empty() ? 0 : x1 - x0 + 1; }
  friend bool operator==(const SupportBox&, const SupportBox&) = default;
};

/// Tight box around pixels where any channel in [c0, c1) of `item` has a
/// nonzero gradient.
template <typename T>
SupportBox gradient_support(const Tensor<T>& grad, int item, int c0, int c1) {
  const Dims4 d = dims4(grad.shape());
  if (item < 0 || item >= d.n || c0 < 0 || c1 > d.c || c0 > c1) detail::fail("gradient_support: range out of bounds");
  SupportBox box{d.h, -1, d.w, -1};
  for (int c = c0; c < c1; ++c)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x)
        if (grad.at(item, c, y, x) != T(0)) {
          box.y0 = std::min(box.y0, y);
          box.y1 = std::max(box.y1, y);
          box.x0 = std::min(box.x0, x);
          box.x1 = std::max(box.x1, x);
        }
  return box.empty() ? SupportBox{} : box;
}

/// Overwrites every parameter with seeded uniform values so that no weight
/// is accidentally zero: weights in +-1/sqrt(fan_in), vectors in +-0.5.
template <typename T>
void randomize_parameters(ParamStore<T>& store, std::uint64_t seed) {
  for (Parameter<T>* p : store.all()) {
    CounterRng rng(CounterRng::derive(seed, CounterRng::hash(p->name)));
    const Shape& s = p->value.shape();
    double bound = 0.5;
    if (s.size() >= 2) {
      long long fan_in = 1;
      for (std::size_t i = 1; i < s.size(); ++i) fan_in *= s[i];
      bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    }
    for (auto& v : p->value.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

enum class ProbeInput { neighbor_frame, same_frame };

struct RfProbeOptions {
  int height = 48;
  int width = 48;
  int y = -1;  // target pixel; -1 selects the centre
  int x = -1;
  ProbeInput wrt = ProbeInput::neighbor_frame;
  std::uint64_t seed = 0;
};

namespace detail {

inline void resolve_pixel(RfProbeOptions& o) {
  if (o.y < 0 && o.y != -1) fail("probe pixel row ", o.y, " out of range");
  if (o.x < 0 && o.x != -1) fail("probe pixel column ", o.x, " out of range");
  if (o.y == -1) o.y = o.height / 2;
  if (o.x == -1) o.x = o.width / 2;
  if (o.y >= o.height || o.x >= o.width)
    fail("probe pixel (", o.y, ", ", o.x, ") outside ", o.height, "x", o.width);
}

// Sum over channels of item `item` at one pixel.
template <typename T>
Var<T> pixel_scalar(const Var<T>& out, int item, int y, int x) {
  Tensor<T> mask(out.shape());
  const Dims4 d = dims4(out.shape());
  for (int c = 0; c < d.c; ++c) mask.at(item, c, y, x) = T(1);
  return sum(mul(out, out.tape()->constant(std::move(mask))));
}

}  // namespace detail

/// Gradient support of one output pixel of a single forward-direction GSTS
/// block on a random two-frame input. `neighbor_frame` measures the
/// propagated half of frame 0, `same_frame` every channel of frame 1; the
/// target pixel lives in frame 1. Channel-attention pooling is detached.
inline SupportBox receptive_field_probe(const GstsOptions& opt, int width, RfProbeOptions probe = {}) {
  detail::resolve_pixel(probe);
  ParamStore<double> store(probe.seed);
  GstsBlock<double> block(store, "probe", width, Direction::forward, opt);
  randomize_parameters(store, probe.seed);
  Tape<double> tape;
  tape.set_detach_pooling(true);
  CounterRng rng(CounterRng::derive(probe.seed, CounterRng::hash("probe.input")));
  Tensor<double> input({2, width, probe.height, probe.width});
  for (auto& v : input.data()) v = rng.uniform(-1.0, 1.0);
  const Var<double> x = tape.variable(std::move(input));
  tape.backward(detail::pixel_scalar(block(tape, x, 2), 1, probe.y, probe.x));
  const Tensor<double> g = tape.grad(x);
  const bool tsm = opt.temporal == TemporalMode::tsm_bidirectional;
  const int kept = tsm ? 3 * width / 4 : width / 2;
  return probe.wrt == ProbeInput::neighbor_frame ? gradient_support(g, 0, kept, width)
                                                 : gradient_support(g, 1, 0, width);
}

/// Whole-model variant: support in input frame `frame - 1` (neighbor) or
/// `frame` (same) of the centre pixel of output frame `frame`.
inline SupportBox receptive_field_probe(const ShiftNet<double>& model, int frames, int frame, RfProbeOptions probe) {
  detail::resolve_pixel(probe);
  if (frame < 0 || frame >= frames) detail::fail("probe frame ", frame, " outside 0..", frames - 1);
  if (probe.wrt == ProbeInput::neighbor_frame && frame == 0) detail::fail("frame 0 has no preceding neighbour");
  Tape<double> tape;
  tape.set_detach_pooling(true);
  CounterRng rng(CounterRng::derive(probe.seed, CounterRng::hash("probe.input")));
  Tensor<double> input({frames, model.config().in_channels, probe.height, probe.width});
  for (auto& v : input.data()) v = rng.uniform(0.0, 1.0);
  const Var<double> x = tape.variable(std::move(input));
  tape.backward(detail::pixel_scalar(model.forward(tape, x, frames), frame, probe.y, probe.x));
  const int item = probe.wrt == ProbeInput::neighbor_frame ? frame - 1 : frame;
  return gradient_support(tape.grad(x), item, 0, model.config().in_channels);
}

/// Target region of one output frame.
struct Patch {
  int frame = 1;
  int y = 0, x = 0;
  int height = 8, width = 8;
};

struct GroupAttribution {
  std::vector<double> weights;   // one per displacement group, sum 1 (or all 0)
  std::vector<Offset> offsets;   // nominal group displacement, full-resolution pixels
  Direction direction = Direction::forward;
  int scale = 1;                 // resolution divisor of the probed block
  bool cross_frame = false;

  /// Index of the largest weight (first on ties).
  int top() const {
    return static_cast<int>(std::max_element(weights.begin(), weights.end()) - weights.begin());
  }
};

/// For the first grouped-shift block executed in stage 2, sums
/// |d(mean of the target patch) / d(shifted channels)| over each
/// displacement group of the target frame, then normalises. Without a
/// temporal path every weight is 0.
template <typename T>
GroupAttribution shift_group_attribution(const ShiftNet<T>& model, const VideoClip& clip, const Patch& patch) {
  clip.validate();
  const ModelConfig& cfg = model.config();
  if (cfg.gsts.spatial != SpatialMode::grouped_shift) detail::fail("attribution needs spatial_mode=grouped_shift");
  if (clip.channels != cfg.in_channels)
    detail::fail("clip has ", clip.channels, " channels, model expects ", cfg.in_channels);
  if (patch.frame < 0 || patch.frame >= clip.frames || patch.height < 1 || patch.width < 1 || patch.y < 0 ||
      patch.x < 0 || patch.y + patch.height > clip.height || patch.x + patch.width > clip.width)
    detail::fail("attribution patch outside the clip");
  Tape<T> tape;
  GstsTrace<T> trace;
  const Var<T> out = model.forward(tape, tape.constant(to_tensor<T>(clip)), clip.frames, &trace);
  if (!trace.captured) detail::fail("model has no grouped-shift block to attribute");

  Tensor<T> mask(out.shape());
  const T w = T(1) / static_cast<T>(patch.height * patch.width * clip.channels);
  for (int c = 0; c < clip.channels; ++c)
    for (int y = patch.y; y < patch.y + patch.height; ++y)
      for (int x = patch.x; x < patch.x + patch.width; ++x) mask.at(patch.frame, c, y, x) = w;
  tape.backward(sum(mul(out, tape.constant(std::move(mask)))));

  const ShiftSpec& spec = cfg.gsts.spec;
  const int m = spec.groups();
  GroupAttribution r;
  r.weights.assign(static_cast<std::size_t>(m), 0.0);
  r.direction = trace.direction;
  r.cross_frame = trace.cross_frame;
  const Dims4 d = dims4(trace.shifted.shape());
  r.scale = clip.height / d.h;
  for (Offset o : spec.group_offsets()) r.offsets.push_back({o.dx * r.scale, o.dy * r.scale});
  if (!trace.cross_frame) return r;

  const Tensor<T> g = tape.grad(trace.shifted);
  const int per = d.c / m;
  double total = 0.0;
  for (int k = 0; k < m; ++k) {
    double s = 0.0;
    for (int c = k * per; c < (k + 1) * per; ++c)
      for (int y = 0; y < d.h; ++y)
        for (int x = 0; x < d.w; ++x) s += std::abs(static_cast<double>(g.at(patch.frame, c, y, x)));
    r.weights[static_cast<std::size_t>(k)] = s;
    total += s;
  }
  if (total > 0)
    for (auto& v : r.weights) v /= total;
  return r;
}

}  // namespace gshift
