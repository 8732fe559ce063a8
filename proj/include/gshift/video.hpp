// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gshift/error.hpp"
#include "gshift/rng.hpp"
#include "gshift/shift.hpp"
#include "gshift/tensor.hpp"

namespace gshift {

/// T frames of C x H x W float samples, nominal range [0, 1].
/// `motion[t]` is the global displacement from frame t to t + 1, when known.
struct VideoClip {
  int frames = 0, channels = 0, height = 0, width = 0;
  std::vector<float> values;
  std::vector<Offset> motion;

  VideoClip() = default;
  VideoClip(int t, int c, int h, int w, float fill = 0.0f)
      : frames(t), channels(c), height(h), width(w),
        values(static_cast<std::size_t>(t) * c * h * w, fill) {
    if (t < 0 || c < 0 || h < 0 || w < 0) detail::fail("negative clip extent");
  }

  std::size_t frame_size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }

  float& at(int t, int c, int y, int x) { return values[index(t, c, y, x)]; }
  float at(int t, int c, int y, int x) const { return values[index(t, c, y, x)]; }

  std::span<float> frame(int t) { return {values.data() + t * frame_size(), frame_size()}; }
  std::span<const float> frame(int t) const { return {values.data() + t * frame_size(), frame_size()}; }

  bool same_geometry(const VideoClip& o) const {
    return frames == o.frames && channels == o.channels && height == o.height && width == o.width;
  }

  void validate() const {
    if (values.size() != static_cast<std::size_t>(frames) * frame_size())
      detail::fail("clip buffer holds ", values.size(), " values, expected ", static_cast<std::size_t>(frames) * frame_size());
    if (!motion.empty() && static_cast<int>(motion.size()) != frames - 1)
      detail::fail("clip has ", motion.size(), " motion vectors for ", frames, " frames");
  }

 private:
  std::size_t index(int t, int c, int y, int x) const {
    return ((static_cast<std::size_t>(t) * channels + c) * height + y) * width + x;
  }
};

enum class SynthStyle { moving_shapes, drifting_texture };

struct SynthOptions {
  int channels = 3;
  /// Global motion per frame is drawn uniformly from [-max_speed, max_speed]^2.
  int max_speed = 2;
  /// Lattice spacing of the coarsest texture octave, in pixels.
  int texture_scale = 12;
  int shape_count = 4;
};

namespace detail {

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise on an infinite lattice; deterministic in (key, ix, iy).
inline double lattice(std::uint64_t key, long long ix, long long iy) {
  const std::uint64_t h = CounterRng::mix(key ^ CounterRng::mix(static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ull ^
                                                                 static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4Full));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double value_noise(std::uint64_t key, double x, double y, double scale) {
  const double fx = x / scale, fy = y / scale;
  const double x0 = std::floor(fx), y0 = std::floor(fy);
  const double tx = smoothstep(fx - x0), ty = smoothstep(fy - y0);
  const auto ix = static_cast<long long>(x0), iy = static_cast<long long>(y0);
  const double a = lattice(key, ix, iy), b = lattice(key, ix + 1, iy);
  const double c = lattice(key, ix, iy + 1), d = lattice(key, ix + 1, iy + 1);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

// Two-octave texture in [0, 1] evaluated at integer world coordinates.
inline double texture(std::uint64_t key, long long x, long long y, int scale) {
  const double coarse = value_noise(key, static_cast<double>(x), static_cast<double>(y), scale);
  const double fine = value_noise(CounterRng::derive(key, 1), static_cast<double>(x), static_cast<double>(y),
                                  std::max(2.0, scale / 3.0));
  return 0.7 * coarse + 0.3 * fine;
}

}  // namespace detail

/// Procedural clip with known global motion. `drifting_texture` translates a
/// texture rigidly by an integer vector per frame; `moving_shapes` adds
/// independently moving discs and boxes on top of a drifting background.
inline VideoClip gen_synthetic_video(std::uint64_t seed, int frames, int height, int width, SynthStyle style,
                                     const SynthOptions& opt = {}) {
  if (frames < 2) detail::fail("synthetic clips need at least 2 frames, got ", frames);
  if (height < 1 || width < 1 || opt.channels < 1) detail::fail("synthetic clip extents must be positive");
  CounterRng rng(CounterRng::derive(seed, CounterRng::hash("gen_synthetic_video")));
  const Offset motion{rng.uniform_int(-opt.max_speed, opt.max_speed), rng.uniform_int(-opt.max_speed, opt.max_speed)};
  const long long ox = rng.uniform_int(-100000, 100000), oy = rng.uniform_int(-100000, 100000);
  const std::uint64_t lum_key = rng.next_u64();
  std::vector<std::uint64_t> chroma_keys;
  std::vector<double> tint;
  for (int c = 0; c < opt.channels; ++c) {
    chroma_keys.push_back(rng.next_u64());
    tint.push_back(rng.uniform(0.2, 0.8));
  }

  VideoClip clip(frames, opt.channels, height, width);
  clip.motion.assign(static_cast<std::size_t>(frames - 1), motion);
  for (int t = 0; t < frames; ++t)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        // content moves by +motion per frame: sample the world at p - t * motion
        const long long wx = ox + x - static_cast<long long>(t) * motion.dx;
        const long long wy = oy + y - static_cast<long long>(t) * motion.dy;
        const double lum = detail::texture(lum_key, wx, wy, opt.texture_scale);
        for (int c = 0; c < opt.channels; ++c) {
          const double chroma = detail::texture(chroma_keys[c], wx, wy, 2 * opt.texture_scale);
          clip.at(t, c, y, x) = static_cast<float>(0.6 * lum + 0.4 * (0.5 * chroma + 0.5 * tint[c]));
        }
      }

  if (style == SynthStyle::moving_shapes) {
    for (int s = 0; s < opt.shape_count; ++s) {
      const bool disc = rng.uniform() < 0.5;
      const double cx = rng.uniform(0, width), cy = rng.uniform(0, height);
      const double size = rng.uniform(0.12, 0.3) * std::min(width, height);
      const double vx = motion.dx + rng.uniform_int(-1, 1), vy = motion.dy + rng.uniform_int(-1, 1);
      std::vector<float> color;
      for (int c = 0; c < opt.channels; ++c) color.push_back(static_cast<float>(rng.uniform()));
      for (int t = 0; t < frames; ++t) {
        const double px = cx + t * vx, py = cy + t * vy;
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) {
            const double ddx = x - px, ddy = y - py;
            const bool inside = disc ? ddx * ddx + ddy * ddy <= size * size / 4
                                     : std::abs(ddx) <= size / 2 && std::abs(ddy) <= size / 3;
            if (!inside) continue;
            for (int c = 0; c < opt.channels; ++c) clip.at(t, c, y, x) = color[c];
          }
      }
    }
  }
  return clip;
}

/// Adds i.i.d. N(0, (sigma/255)^2) with sigma ~ U[sigma_lo, sigma_hi] drawn
/// once per clip. No clipping unless `clip_range`.
inline std::pair<VideoClip, double> add_gaussian_noise(const VideoClip& clean, double sigma_lo, double sigma_hi,
                                                       std::uint64_t seed, bool clip_range = false) {
  if (!(sigma_lo >= 0 && sigma_lo <= sigma_hi))
    detail::fail("noise range [", sigma_lo, ", ", sigma_hi, "] is invalid");
  CounterRng rng(CounterRng::derive(seed, CounterRng::hash("add_gaussian_noise")));
  const double sigma = sigma_lo == sigma_hi ? sigma_lo : rng.uniform(sigma_lo, sigma_hi);
  VideoClip out = clean;
  if (sigma == 0) return {out, sigma};
  const double std = sigma / 255.0;
  for (auto& v : out.values) {
    double n = v + std * rng.normal();
    if (clip_range) n = std::clamp(n, 0.0, 1.0);
    v = static_cast<float>(n);
  }
  return {out, sigma};
}

/// Averages windows of 2r + 1 consecutive frames. Returns the blurred clip
/// (T - 2r frames) and the matching sharp centre frames.
inline std::pair<VideoClip, VideoClip> synth_motion_blur(const VideoClip& sharp, int radius) {
  if (radius < 1) detail::fail("blur radius must be at least 1, got ", radius);
  if (sharp.frames <= 2 * radius)
    detail::fail("motion blur with radius ", radius, " needs more than ", 2 * radius, " frames, got ", sharp.frames);
  const int out_t = sharp.frames - 2 * radius;
  VideoClip blurred(out_t, sharp.channels, sharp.height, sharp.width);
  VideoClip centers(out_t, sharp.channels, sharp.height, sharp.width);
  const std::size_t fs = sharp.frame_size();
  const double inv = 1.0 / (2 * radius + 1);
  std::vector<double> acc(fs);
  for (int j = 0; j < out_t; ++j) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int t = j; t <= j + 2 * radius; ++t) {
      auto f = sharp.frame(t);
      for (std::size_t i = 0; i < fs; ++i) acc[i] += f[i];
    }
    auto b = blurred.frame(j);
    for (std::size_t i = 0; i < fs; ++i) b[i] = static_cast<float>(acc[i] * inv);
    auto c = sharp.frame(j + radius);
    std::copy(c.begin(), c.end(), centers.frame(j).begin());
  }
  if (!sharp.motion.empty()) {
    blurred.motion.assign(sharp.motion.begin() + radius, sharp.motion.begin() + radius + out_t - 1);
    centers.motion = blurred.motion;
  }
  return {blurred, centers};
}

/// Mirrors every frame horizontally and/or vertically; motion flips sign.
inline VideoClip flip(const VideoClip& clip, bool horizontal, bool vertical) {
  VideoClip out = clip;
  for (int t = 0; t < clip.frames; ++t)
    for (int c = 0; c < clip.channels; ++c)
      for (int y = 0; y < clip.height; ++y)
        for (int x = 0; x < clip.width; ++x)
          out.at(t, c, y, x) = clip.at(t, c, vertical ? clip.height - 1 - y : y, horizontal ? clip.width - 1 - x : x);
  for (auto& m : out.motion) {
    if (horizontal) m.dx = -m.dx;
    if (vertical) m.dy = -m.dy;
  }
  return out;
}

/// Random horizontal / vertical flip applied consistently to all frames.
inline VideoClip augment_flips(const VideoClip& clip, std::uint64_t seed) {
  CounterRng rng(CounterRng::derive(seed, CounterRng::hash("augment_flips")));
  const bool h = rng.uniform() < 0.5;
  const bool v = rng.uniform() < 0.5;
  return flip(clip, h, v);
}

/// Sub-rectangle [y, y + ph) x [x, x + pw) of every frame.
inline VideoClip crop(const VideoClip& clip, int y0, int x0, int ph, int pw) {
  if (y0 < 0 || x0 < 0 || ph < 1 || pw < 1 || y0 + ph > clip.height || x0 + pw > clip.width)
    detail::fail("crop [", y0, "+", ph, ", ", x0, "+", pw, "] outside ", clip.height, "x", clip.width, " clip");
  VideoClip out(clip.frames, clip.channels, ph, pw);
  out.motion = clip.motion;
  for (int t = 0; t < clip.frames; ++t)
    for (int c = 0; c < clip.channels; ++c)
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) out.at(t, c, y, x) = clip.at(t, c, y0 + y, x0 + x);
  return out;
}

/// `count` square patches at seeded positions, aligned across frames.
inline std::vector<VideoClip> sample_patches(const VideoClip& clip, int patch, int count, std::uint64_t seed) {
  if (patch > clip.height || patch > clip.width)
    detail::fail("patch ", patch, " larger than clip ", clip.height, "x", clip.width);
  CounterRng rng(CounterRng::derive(seed, CounterRng::hash("sample_patches")));
  std::vector<VideoClip> out;
  for (int i = 0; i < count; ++i) {
    const int y = rng.uniform_int(0, clip.height - patch);
    const int x = rng.uniform_int(0, clip.width - patch);
    out.push_back(crop(clip, y, x, patch, patch));
  }
  return out;
}

/// Stacks clips of equal geometry into [clips * frames, C, H, W].
template <typename T>
Tensor<T> to_tensor(const std::vector<VideoClip>& clips) {
  if (clips.empty()) detail::fail("to_tensor: no clips");
  const VideoClip& first = clips.front();
  Tensor<T> out({static_cast<int>(clips.size()) * first.frames, first.channels, first.height, first.width});
  std::size_t at = 0;
  for (const auto& c : clips) {
    if (!c.same_geometry(first)) detail::fail("to_tensor: clips differ in geometry");
    for (float v : c.values) out[at++] = static_cast<T>(v);
  }
  return out;
}

template <typename T>
Tensor<T> to_tensor(const VideoClip& clip) {
  return to_tensor<T>(std::vector<VideoClip>{clip});
}

/// Inverse of to_tensor for `frames`-frame clips.
template <typename T>
std::vector<VideoClip> to_clips(const Tensor<T>& t, int frames) {
  const Dims4 d = dims4(t.shape());
  if (frames < 1 || d.n % frames != 0) detail::fail("to_clips: ", d.n, " items are not whole ", frames, "-frame clips");
  std::vector<VideoClip> out;
  std::size_t at = 0;
  for (int b = 0; b < d.n / frames; ++b) {
    VideoClip c(frames, d.c, d.h, d.w);
    for (auto& v : c.values) v = static_cast<float>(t[at++]);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// VTEN: "VTEN1\0", u32 T, C, H, W (little endian), u8 dtype (1 = f32),
// 3 pad bytes, then T*C*H*W little-endian f32 values.

constexpr std::array<char, 6> kVtenMagic{'V', 'T', 'E', 'N', '1', '\0'};
constexpr std::size_t kVtenHeaderSize = 26;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

/// Bounds-checked little-endian reader over a byte buffer.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) throw FormatError(std::string("truncated while reading ") + what, pos_);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing", 0);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string(), 0);
}

}  // namespace detail

inline std::string encode_vten(const VideoClip& clip) {
  clip.validate();
  std::string out(kVtenMagic.begin(), kVtenMagic.end());
  detail::put_u32(out, static_cast<std::uint32_t>(clip.frames));
  detail::put_u32(out, static_cast<std::uint32_t>(clip.channels));
  detail::put_u32(out, static_cast<std::uint32_t>(clip.height));
  detail::put_u32(out, static_cast<std::uint32_t>(clip.width));
  out.push_back(1);
  out.append(3, '\0');
  out.reserve(out.size() + 4 * clip.values.size());
  for (float v : clip.values) detail::put_f32(out, v);
  return out;
}

inline VideoClip decode_vten(std::string_view bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(kVtenMagic.size(), "magic");
  for (std::size_t i = 0; i < kVtenMagic.size(); ++i)
    if (magic[i] != kVtenMagic[i]) throw FormatError("bad VTEN magic", i);
  const std::uint32_t t = r.u32("T"), c = r.u32("C"), h = r.u32("H"), w = r.u32("W");
  const std::size_t dtype_at = r.pos();
  const std::uint8_t dtype = r.u8("dtype");
  if (dtype != 1) throw FormatError("unsupported VTEN dtype code " + std::to_string(dtype), dtype_at);
  r.take(3, "padding");
  const std::uint64_t count = static_cast<std::uint64_t>(t) * c * h * w;
  const std::uint64_t expected = kVtenHeaderSize + 4 * count;
  if (bytes.size() != expected)
    throw FormatError("VTEN length " + std::to_string(bytes.size()) + " does not match header (expected " +
                          std::to_string(expected) + ")",
                      std::min<std::size_t>(bytes.size(), expected));
  VideoClip clip(static_cast<int>(t), static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  for (auto& v : clip.values) v = r.f32("values");
  return clip;
}

inline void save_vten(const VideoClip& clip, const std::filesystem::path& path) {
  detail::write_file(path, encode_vten(clip));
}

inline VideoClip load_vten(const std::filesystem::path& path) { return decode_vten(detail::read_file(path)); }

/// 8-bit binary PPM of frame t; value v maps to clamp(floor(255 v + 0.5), 0, 255).
/// Single-channel clips are written as grey.
inline void export_ppm(const VideoClip& clip, int t, const std::filesystem::path& path) {
  if (t < 0 || t >= clip.frames) detail::fail("frame ", t, " out of range for ", clip.frames, "-frame clip");
  if (clip.channels != 1 && clip.channels != 3) detail::fail("PPM export needs 1 or 3 channels, got ", clip.channels);
  std::string out = "P6\n" + std::to_string(clip.width) + " " + std::to_string(clip.height) + "\n255\n";
  for (int y = 0; y < clip.height; ++y)
    for (int x = 0; x < clip.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = clip.at(t, clip.channels == 1 ? 0 : c, y, x);
        const double q = std::floor(static_cast<double>(v) * 255.0 + 0.5);
        out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0))));
      }
  detail::write_file(path, out);
}

}  // namespace gshift
