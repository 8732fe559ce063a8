// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gshift/tensor.hpp"

namespace gshift {

/// Named model weight. `grad` accumulates across tapes until zero_grad().
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    else grad.fill(T(0));
  }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape<T>* tape() const noexcept { return tape_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// What a backward rule sees: the output gradient, the recorded values, and
/// gradient buffers for inputs (nullptr where an input needs no gradient).
template <typename T>
struct BackwardContext {
  const Tensor<T>& grad_out;
  const Tensor<T>& out;
  std::vector<const Tensor<T>*> in;
  std::vector<Tensor<T>*> grad_in;
};

/// Linear record of primitive applications. Single-threaded; node ids are
/// assigned in execution order so the reverse sweep is a topological order.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(BackwardContext<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), {}, {}, false, nullptr); }
  Var<T> variable(Tensor<T> value) { return push(std::move(value), {}, {}, true, nullptr); }

  /// Leaf bound to `p`; repeated calls return the same node.
  Var<T> parameter(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>(this, it->second);
    Var<T> v = push(p.value, {}, {}, p.trainable && grad_enabled_, &p);
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
    std::vector<std::uint32_t> ids;
    ids.reserve(inputs.size());
    bool needs = false;
    for (const auto& v : inputs) {
      if (v.tape() != this) detail::fail("input belongs to a different tape");
      ids.push_back(v.id());
      needs = needs || nodes_[v.id()].requires_grad;
    }
    if (!needs) return push(std::move(value), {}, {}, false, nullptr);
    return push(std::move(value), std::move(ids), std::move(fn), true, nullptr);
  }

  /// Reverse sweep from a scalar root. Gradients accumulate by summation.
  void backward(const Var<T>& root) {
    Node& r = nodes_.at(root.id());
    if (r.value.size() != 1)
      detail::fail("backward needs a scalar root, got shape ", to_string(r.value.shape()));
    r.grad = Tensor<T>(r.value.shape(), T(1));
    for (std::int64_t i = root.id(); i >= 0; --i) {
      Node& node = nodes_[static_cast<std::size_t>(i)];
      if (!node.backward || node.grad.empty()) continue;
      BackwardContext<T> ctx{node.grad, node.value, {}, {}};
      ctx.in.reserve(node.inputs.size());
      ctx.grad_in.reserve(node.inputs.size());
      for (std::uint32_t in : node.inputs) {
        Node& src = nodes_[in];
        ctx.in.push_back(&src.value);
        if (src.requires_grad) {
          if (src.grad.empty()) src.grad = Tensor<T>(src.value.shape());
          ctx.grad_in.push_back(&src.grad);
        } else {
          ctx.grad_in.push_back(nullptr);
        }
      }
      node.backward(ctx);
    }
  }

  /// Gradient of the last backward() w.r.t. `v`; zeros if it received none.
  Tensor<T> grad(const Var<T>& v) const {
    const Node& n = nodes_.at(v.id());
    return n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad;
  }

  /// Adds leaf gradients into their bound Parameters.
  void flush_parameter_grads() {
    for (auto& [param, id] : param_nodes_) {
      const Node& n = nodes_[id];
      if (n.grad.empty() || !param->trainable) continue;
      if (param->grad.shape() != param->value.shape()) param->zero_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) param->grad[i] += n.grad[i];
    }
  }

  const Tensor<T>& value(std::uint32_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::uint32_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// When disabled, parameters enter as constants and nothing is recorded
  /// for differentiation (inference mode).
  void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  /// Treat globally pooled statistics as constants in backward. Used by the
  /// receptive-field probe to measure local support only.
  void set_detach_pooling(bool on) noexcept { detach_pooling_ = on; }
  bool detach_pooling() const noexcept { return detach_pooling_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(Tensor<T> value, std::vector<std::uint32_t> inputs, BackwardFn fn, bool requires_grad,
              Parameter<T>* param) {
    nodes_.push_back(Node{std::move(value), {}, std::move(inputs), std::move(fn), requires_grad, param});
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
  std::unordered_map<Parameter<T>*, std::uint32_t> param_nodes_;
  bool grad_enabled_ = true;
  bool detach_pooling_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

}  // namespace gshift
