// SPDX-License-Identifier: Apache-2.0
// Reference oracles shared by the unit tests and the acceptance runner.
// Nothing here calls into the kernels under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gshift/gshift.hpp"

namespace gshift::testing {

inline Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  CounterRng rng(seed);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

template <typename T>
Tensor<T> random_tensor_as(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return random_tensor(std::move(shape), seed, lo, hi).template cast<T>();
}

/// Nested-loop cross-correlation, zero padding, stride 1.
inline Tensor<double> brute_conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias,
                                   int groups, int pad) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), cig = w.dim(1), k = w.dim(2);
  const int oh = h + 2 * pad - k + 1, ow = wd + 2 * pad - k + 1;
  const int cog = cout / groups;
  Tensor<double> out({n, cout, oh, ow});
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < cout; ++oc)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double s = bias ? (*bias)[oc] : 0.0;
          const int g = oc / cog;
          for (int icl = 0; icl < cig; ++icl)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = y + ky - pad, ix = xx + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                s += w.at(oc, icl, ky, kx) * x.at(b, g * cig + icl, iy, ix);
              }
          out.at(b, oc, y, xx) = s;
        }
  (void)cin;
  return out;
}

/// Pass rule for one gradient coordinate: |a - n| <= max(rel * max(|a|, |n|), floor).
inline bool grad_close(double analytic, double numeric, double rel = 1e-4, double floor = 1e-7) {
  return std::abs(analytic - numeric) <= std::max(rel * std::max(std::abs(analytic), std::abs(numeric)), floor);
}

struct GradCheckResult {
  bool ok = true;
  std::size_t checked = 0;
  double worst_abs = 0.0;
  std::string first_failure;
};

using ScalarFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Central differences (step h) against reverse-mode gradients for every
/// coordinate of every input, or `max_coords` seeded coordinates per input.
inline GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double h = 1e-5,
                                  std::size_t max_coords = 0, std::uint64_t seed = 0) {
  GradCheckResult r;
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  const Var<double> out = f(tape, vars);
  tape.backward(out);
  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> t2;
    std::vector<Var<double>> v2;
    for (const auto& t : xs) v2.push_back(t2.variable(t));
    return f(t2, v2).value()[0];
  };
  CounterRng rng(seed);
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const Tensor<double> analytic = tape.grad(vars[a]);
    std::vector<std::size_t> coords;
    if (max_coords == 0 || inputs[a].size() <= max_coords) {
      for (std::size_t i = 0; i < inputs[a].size(); ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(rng.next_u64() % inputs[a].size());
    }
    for (std::size_t i : coords) {
      const double x0 = probe[a][i];
      probe[a][i] = x0 + h;
      const double fp = eval(probe);
      probe[a][i] = x0 - h;
      const double fm = eval(probe);
      probe[a][i] = x0;
      const double numeric = (fp - fm) / (2 * h);
      ++r.checked;
      r.worst_abs = std::max(r.worst_abs, std::abs(numeric - analytic[i]));
      if (!grad_close(analytic[i], numeric) && r.ok) {
        r.ok = false;
        r.first_failure = "input " + std::to_string(a) + " coord " + std::to_string(i) + ": analytic " +
                          std::to_string(analytic[i]) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

/// Random-weighted sum so every output element carries a distinct gradient.
inline Var<double> weighted_sum(const Var<double>& y, std::uint64_t seed) {
  Tape<double>& tape = *y.tape();
  return sum(mul(y, tape.constant(random_tensor(y.shape(), seed))));
}

/// SSIM from explicit 2-D weighted sums at every valid 11x11 window
/// position (Gaussian sigma 1.5, K1 0.01, K2 0.03, peak 1), channel mean.
inline double ssim_reference(std::span<const float> a, std::span<const float> b, int channels, int h, int w) {
  const int k = 11;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> g(k);
  double gs = 0;
  for (int i = 0; i < k; ++i) gs += g[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2 * sigma * sigma));
  double total = 0.0;
  for (int c = 0; c < channels; ++c) {
    double acc = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + k <= h; ++y0)
      for (int x0 = 0; x0 + k <= w; ++x0) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            const double wt = g[i] * g[j] / (gs * gs);
            const std::size_t at = (static_cast<std::size_t>(c) * h + y0 + i) * w + x0 + j;
            const double x = a[at], y = b[at];
            mx += wt * x;
            my += wt * y;
            sxx += wt * x * x;
            syy += wt * y * y;
            sxy += wt * x * y;
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
        acc += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    total += acc / count;
  }
  return total / channels;
}

/// Sum of |d sum(y[out]) / d x[in]| over one item, given y = f(x) on N items.
inline double item_dependence(const std::function<Var<double>(Tape<double>&, const Var<double>&)>& f,
                              const Tensor<double>& input, int out, int in) {
  Tape<double> tape;
  const auto x = tape.variable(input);
  const auto y = f(tape, x);
  Tensor<double> mask(y.shape());
  const std::size_t item = mask.size() / static_cast<std::size_t>(y.shape()[0]);
  for (std::size_t i = 0; i < item; ++i) mask[out * item + i] = 1.0;
  tape.backward(sum(mul(y, tape.constant(std::move(mask)))));
  const auto g = tape.grad(x);
  const std::size_t in_item = g.size() / static_cast<std::size_t>(input.shape()[0]);
  double s = 0;
  for (std::size_t i = 0; i < in_item; ++i) s += std::abs(g[in * in_item + i]);
  return s;
}

/// Dependence of output frame `out` on input frame `in` through a stack of
/// randomized single GSTS blocks (width 18, D = {-1, 0, 1}) on a 7-frame clip.
inline double stack_dependence(const std::vector<Direction>& dirs, int out, int in, std::uint64_t seed = 11) {
  GstsOptions opt;
  opt.spec = ShiftSpec{{-1, 0, 1}, 1};
  opt.fusion_kernel = 3;
  ParamStore<double> store(0);
  std::vector<GstsBlock<double>> blocks;
  for (std::size_t i = 0; i < dirs.size(); ++i) blocks.emplace_back(store, "b" + std::to_string(i), 18, dirs[i], opt);
  randomize_parameters(store, seed);
  return item_dependence(
      [&](Tape<double>& tape, const Var<double>& x) {
        Var<double> y = x;
        for (const auto& b : blocks) y = b(tape, y, 7);
        return y;
      },
      random_tensor({7, 18, 6, 6}, seed + 1), out, in);
}

/// Alternating stack with nf forward and nb backward blocks, interleaved
/// from the front.
inline std::vector<Direction> interleaved(int nf, int nb) {
  std::vector<Direction> dirs;
  for (int i = 0; i < std::max(nf, nb); ++i) {
    if (i < nf) dirs.push_back(Direction::forward);
    if (i < nb) dirs.push_back(Direction::backward);
  }
  return dirs;
}

}  // namespace gshift::testing
