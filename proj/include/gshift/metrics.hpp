// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gshift/error.hpp"
#include "gshift/video.hpp"

namespace gshift {

constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE), capped at 99 dB when MSE < 1e-12.
inline double psnr(std::span<const float> a, std::span<const float> b, double peak = 1.0) {
  if (a.size() != b.size()) detail::fail("psnr: sizes differ (", a.size(), " vs ", b.size(), ")");
  if (a.empty()) detail::fail("psnr: empty input");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse < 1e-12) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / mse);
}

struct SsimConstants {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) total += g[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  for (auto& v : g) v /= total;
  return g;
}

// Separable weighted sums over every valid window position of an h x w plane.
inline std::vector<double> window_filter(const std::vector<double>& plane, int h, int w, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size()), oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < k; ++i) s += g[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < k; ++i) s += g[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace detail

/// Single-scale SSIM of two C x H x W frames: Gaussian window, mean over
/// valid window positions, averaged over channels.
inline double ssim(std::span<const float> a, std::span<const float> b, int channels, int h, int w,
                   const SsimConstants& k = {}) {
  if (a.size() != b.size() || a.size() != static_cast<std::size_t>(channels) * h * w)
    detail::fail("ssim: frame sizes do not match ", channels, "x", h, "x", w);
  if (h < k.window || w < k.window)
    detail::fail("ssim: frame ", h, "x", w, " smaller than the ", k.window, "x", k.window, " window");
  const auto g = detail::gaussian_window(k.window, k.sigma);
  const double c1 = (k.k1 * k.peak) * (k.k1 * k.peak), c2 = (k.k2 * k.peak) * (k.k2 * k.peak);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (int c = 0; c < channels; ++c) {
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = a[c * plane + i];
      y[i] = b[c * plane + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::window_filter(x, h, w, g), my = detail::window_filter(y, h, w, g);
    const auto sxx = detail::window_filter(xx, h, w, g), syy = detail::window_filter(yy, h, w, g);
    const auto sxy = detail::window_filter(xy, h, w, g);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / channels;
}

/// Mean over consecutive frame pairs of the mean absolute difference.
inline double temporal_consistency(const VideoClip& clip) {
  clip.validate();
  if (clip.frames < 2) detail::fail("temporal_consistency needs at least 2 frames");
  double total = 0.0;
  for (int t = 0; t + 1 < clip.frames; ++t) {
    auto a = clip.frame(t), b = clip.frame(t + 1);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(b[i]) - static_cast<double>(a[i]));
    total += s / static_cast<double>(a.size());
  }
  return total / (clip.frames - 1);
}

struct MetricReport {
  std::vector<double> psnr;
  std::vector<double> ssim;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double temporal_consistency = 0.0;
  std::uint64_t config_digest = 0;

  /// Header line plus one line per frame, tab separated.
  std::string to_tsv() const {
    std::ostringstream out;
    out.precision(10);
    out << "frame\tpsnr\tssim\n";
    for (std::size_t i = 0; i < psnr.size(); ++i) out << i << '\t' << psnr[i] << '\t' << ssim[i] << '\n';
    out << "mean\t" << mean_psnr << '\t' << mean_ssim << '\n';
    return out.str();
  }
};

/// Per-frame PSNR and SSIM of `output` against `reference`.
inline MetricReport evaluate(const VideoClip& output, const VideoClip& reference, std::uint64_t digest = 0) {
  output.validate();
  reference.validate();
  if (!output.same_geometry(reference)) detail::fail("evaluate: output and reference clips differ in geometry");
  MetricReport r;
  r.config_digest = digest;
  for (int t = 0; t < output.frames; ++t) {
    r.psnr.push_back(psnr(output.frame(t), reference.frame(t)));
    r.ssim.push_back(ssim(output.frame(t), reference.frame(t), output.channels, output.height, output.width));
  }
  r.mean_psnr = std::accumulate(r.psnr.begin(), r.psnr.end(), 0.0) / static_cast<double>(r.psnr.size());
  r.mean_ssim = std::accumulate(r.ssim.begin(), r.ssim.end(), 0.0) / static_cast<double>(r.ssim.size());
  if (output.frames >= 2) r.temporal_consistency = temporal_consistency(output);
  return r;
}

}  // namespace gshift
