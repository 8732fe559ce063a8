// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gshift/error.hpp"

namespace gshift {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major array. Feature maps use N x C x H x W, where N enumerates
/// frames (batch-major, then time).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    for (int d : shape_)
      if (d < 0) detail::fail("negative extent in shape ", to_string(shape_));
    data_.assign(numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_))
      detail::fail("tensor data length ", data_.size(), " does not match shape ", to_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i < 0 ? rank() + i : i)); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// 4-D accessor (n, c, y, x); 3-D tensors are treated as N = 1.
  T& at(int n, int c, int y, int x) { return data_[offset4(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const { return data_[offset4(n, c, y, x)]; }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != size())
      detail::fail("cannot reshape ", to_string(shape_), " to ", to_string(shape));
    return Tensor(std::move(shape), data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset4(int n, int c, int y, int x) const {
    const int r = rank();
    const int C = shape_[r - 3], H = shape_[r - 2], W = shape_[r - 1];
    return ((static_cast<std::size_t>(n) * C + c) * H + y) * W + x;
  }

  Shape shape_;
  std::vector<T> data_;
};

/// N, C, H, W view of a 3-D or 4-D shape.
struct Dims4 {
  int n = 1, c = 1, h = 1, w = 1;
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t item() const { return plane() * c; }
};

inline Dims4 dims4(const Shape& s) {
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  detail::fail("expected a 3-D or 4-D feature tensor, got ", to_string(s));
}

inline Shape with_channels(const Shape& s, int channels) {
  Shape out = s;
  out[out.size() - 3] = channels;
  return out;
}

inline Shape with_spatial(const Shape& s, int h, int w) {
  Shape out = s;
  out[out.size() - 2] = h;
  out[out.size() - 1] = w;
  return out;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    detail::fail("shape mismatch ", to_string(a.shape()), " vs ", to_string(b.shape()));
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace gshift
