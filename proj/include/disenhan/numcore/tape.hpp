#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "disenhan/numcore/tensor.hpp"

namespace disenhan::num {

/// A named trainable array together with its accumulated gradient.
template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
};

/// Ordered collection of parameters. Iteration order is insertion order, which
/// fixes the layout of optimizer state and snapshots. Element addresses are stable.
template <class Real>
class ParamStore {
 public:
  Parameter<Real>& add(std::string name, Tensor<Real> value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter: " + name);
    index_.emplace(name, params_.size());
    Tensor<Real> grad(value.shape());
    params_.push_back(Parameter<Real>{std::move(name), std::move(value), std::move(grad)});
    return params_.back();
  }

  bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }

  Parameter<Real>& at(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("unknown parameter: " + std::string(name));
    return params_[it->second];
  }
  const Parameter<Real>& at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("unknown parameter: " + std::string(name));
    return params_[it->second];
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<Real>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.values().begin(), p.grad.values().end(), Real(0));
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::deque<Parameter<Real>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

template <class Real>
class Tape;

/// Handle to a value recorded on a Tape.
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<Real>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
};

/// Records primitive applications in execution order and replays them backward.
/// One tape serves one forward/backward pass and is confined to one thread.
template <class Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self, std::span<const Real>)>;

  Tape() = default;
  /// With `record_gradients` false, parameters are bound as plain values and no
  /// backward closures are kept.
  explicit Tape(bool record_gradients) : record_gradients_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Real> constant(Tensor<Real> value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  /// Binds a parameter without copying it; backward adds into `p.grad`.
  Var<Real> param(Parameter<Real>& p) {
    Node n;
    n.external = &p.value;
    n.param = &p;
    n.requires_grad = record_gradients_;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var<Real> record(Tensor<Real> value, std::initializer_list<Var<Real>> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var<Real>>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }

  Var<Real> record(Tensor<Real> value, std::span<const Var<Real>> inputs, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    for (const auto& in : inputs) {
      if (in.tape != this) throw Error("tape: input recorded on a different tape");
      n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Tensor<Real>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of node `id`, zero-initialized on first access.
  std::span<Real> grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(value(id).size(), Real(0));
    return n.grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 and propagates to every parameter reachable from `out`.
  void backward(Var<Real> out) {
    if (out.tape != this) throw Error("tape: backward on a foreign variable");
    if (value(out.id).size() != 1) {
      throw ShapeError("backward needs a scalar output, got shape " + shape_str(value(out.id).shape()));
    }
    grad(out.id)[0] += Real(1);
    for (std::size_t id = out.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.param != nullptr) {
        auto dst = n.param->grad.values();
        if (dst.size() != n.grad.size()) n.param->grad = Tensor<Real>(n.param->value.shape());
        dst = n.param->grad.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
      } else if (n.backward) {
        std::vector<Real> g = std::move(n.grad);
        n.backward(*this, id, g);
        n.grad = std::move(g);
      }
    }
  }

 private:
  struct Node {
    Tensor<Real> value;
    const Tensor<Real>* external = nullptr;
    Parameter<Real>* param = nullptr;
    std::vector<Real> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  bool record_gradients_ = true;
};

}  // namespace disenhan::num
