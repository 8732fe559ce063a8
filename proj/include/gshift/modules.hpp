// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gshift/conv.hpp"
#include "gshift/layers.hpp"
#include "gshift/rng.hpp"

namespace gshift {

/// Owns every Parameter of a model. Addresses are stable for the lifetime of
/// the store, including across remove().
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  Parameter<T>& add(const std::string& name, Shape shape) {
    if (find(name)) detail::fail("duplicate parameter name ", name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->value = Tensor<T>(std::move(shape));
    params_.push_back(std::move(p));
    return *params_.back();
  }

  /// Fan-in scaled uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn from
  /// a stream keyed by (seed, name) so order of construction is irrelevant.
  Parameter<T>& add_uniform(const std::string& name, Shape shape, int fan_in) {
    Parameter<T>& p = add(name, std::move(shape));
    CounterRng rng(CounterRng::derive(seed_, CounterRng::hash(name)));
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    for (auto& v : p.value.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    return p;
  }

  Parameter<T>& add_constant(const std::string& name, Shape shape, T value) {
    Parameter<T>& p = add(name, std::move(shape));
    p.value.fill(value);
    return p;
  }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  void remove(const std::string& name) {
    std::erase_if(params_, [&](const auto& p) { return p->name == name; });
  }

  std::vector<Parameter<T>*> all() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Parameter<T>*> all() const {
    std::vector<const Parameter<T>*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  long long scalar_count(bool trainable_only = true) const {
    long long n = 0;
    for (const auto& p : params_)
      if (!trainable_only || p->trainable) n += static_cast<long long>(p->value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

/// Dense k x k convolution with bias, "same" padding.
template <typename T>
class Conv {
 public:
  Conv() = default;
  Conv(ParamStore<T>& store, const std::string& name, int cin, int cout, int k)
      : cin_(cin), cout_(cout), k_(k) {
    weight_ = &store.add_uniform(name + ".weight", {cout, cin, k, k}, cin * k * k);
    bias_ = &store.add_constant(name + ".bias", {cout}, T(0));
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    return conv2d(x, tape.parameter(*weight_), std::optional<Var<T>>(tape.parameter(*bias_)), 1, k_ / 2);
  }

  long long macs(int h, int w) const { return conv_macs(cin_, cout_, k_, 1, h, w); }
  Parameter<T>& weight() const { return *weight_; }
  Parameter<T>& bias() const { return *bias_; }

 private:
  int cin_ = 0, cout_ = 0, k_ = 1;
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
};

/// Depthwise k x k convolution, optionally trained as three parallel branches
/// (k x k, 1 x 1, identity) that merge() folds into one kernel.
template <typename T>
class DepthwiseConv {
 public:
  DepthwiseConv() = default;
  DepthwiseConv(ParamStore<T>& store, const std::string& name, int channels, int k, bool branched)
      : name_(name), channels_(channels), k_(k), branched_(branched) {
    if (k % 2 == 0) detail::fail("depthwise kernel size must be odd, got ", k);
    weight_ = &store.add_uniform(name + ".weight", {channels, 1, k, k}, k * k);
    bias_ = &store.add_constant(name + ".bias", {channels}, T(0));
    if (branched_) weight_1x1_ = &store.add_constant(name + ".weight_1x1", {channels, 1, 1, 1}, T(0));
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    Var<T> y = conv2d(x, tape.parameter(*weight_), std::optional<Var<T>>(tape.parameter(*bias_)), channels_, k_ / 2);
    if (!branched_) return y;
    y = add(y, conv2d(x, tape.parameter(*weight_1x1_), channels_, 0));
    return add(y, x);
  }

  /// Sets the effective (merged) kernel of channel c.
  void set_effective_kernel(int c, const std::vector<T>& kernel) {
    T* w = weight_->value.ptr() + static_cast<std::size_t>(c) * k_ * k_;
    std::copy(kernel.begin(), kernel.end(), w);
    if (branched_) {
      w[center()] -= T(1);
      weight_1x1_->value[c] = T(0);
    }
  }

  /// Folds the 1x1 and identity branches into the k x k kernel.
  /// Returns false if already merged.
  bool merge(ParamStore<T>& store) {
    if (!branched_) return false;
    for (int c = 0; c < channels_; ++c) {
      T* w = weight_->value.ptr() + static_cast<std::size_t>(c) * k_ * k_;
      w[center()] += weight_1x1_->value[c] + T(1);
    }
    store.remove(name_ + ".weight_1x1");
    weight_1x1_ = nullptr;
    branched_ = false;
    return true;
  }

  bool branched() const noexcept { return branched_; }
  int kernel_size() const noexcept { return k_; }
  int channels() const noexcept { return channels_; }
  long long macs(int h, int w) const {
    long long m = conv_macs(channels_, channels_, k_, channels_, h, w);
    if (branched_) m += conv_macs(channels_, channels_, 1, channels_, h, w);
    return m;
  }

 private:
  int center() const { return (k_ / 2) * k_ + k_ / 2; }

  std::string name_;
  int channels_ = 0, k_ = 1;
  bool branched_ = false;
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  Parameter<T>* weight_1x1_ = nullptr;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, int channels) {
    gamma_ = &store.add_constant(name + ".gamma", {channels}, T(1));
    beta_ = &store.add_constant(name + ".beta", {channels}, T(0));
  }
  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    return layer_norm(x, tape.parameter(*gamma_), tape.parameter(*beta_));
  }

 private:
  Parameter<T>* gamma_ = nullptr;
  Parameter<T>* beta_ = nullptr;
};

template <typename T>
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(ParamStore<T>& store, const std::string& name, int channels) : channels_(channels) {
    weight_ = &store.add_uniform(name + ".weight", {channels, channels}, channels);
    // unit bias: the block starts close to an unscaled pass-through
    bias_ = &store.add_constant(name + ".bias", {channels}, T(1));
  }
  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    return channel_attention(x, tape.parameter(*weight_), std::optional<Var<T>>(tape.parameter(*bias_)));
  }

 private:
  int channels_ = 0;
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
};

/// Channel attention block: x + CA(conv3(gelu(conv3(x)))).
template <typename T>
class Cab {
 public:
  Cab() = default;
  Cab(ParamStore<T>& store, const std::string& name, int channels)
      : conv1_(store, name + ".conv1", channels, channels, 3),
        conv2_(store, name + ".conv2", channels, channels, 3),
        ca_(store, name + ".ca", channels) {}

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    Var<T> y = conv2_(tape, gelu(conv1_(tape, x)));
    return add(x, ca_(tape, y));
  }

  long long macs(int h, int w) const { return conv1_.macs(h, w) + conv2_.macs(h, w); }

 private:
  Conv<T> conv1_, conv2_;
  ChannelAttention<T> ca_;
};

}  // namespace gshift
