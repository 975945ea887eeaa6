#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "disenhan/error.hpp"
#include "disenhan/numcore/tape.hpp"

namespace disenhan::train {

struct AdamOptions {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over every parameter of a store. Moments are created
/// lazily with the parameter shapes on the first step.
template <class Real>
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  const AdamOptions& options() const noexcept { return opts_; }
  void set_lr(double lr) noexcept { opts_.lr = lr; }
  std::uint64_t steps() const noexcept { return t_; }

  /// Checks every gradient first, so a non-finite value leaves all parameters untouched.
  void step(num::ParamStore<Real>& store) {
    for (const auto& p : store)
      for (Real g : p.grad.values())
        if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    if (m_.empty()) {
      for (const auto& p : store) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
      }
    }
    if (m_.size() != store.size()) throw ShapeError("Adam: parameter store changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    std::size_t idx = 0;
    for (auto& p : store) {
      auto& m = m_[idx];
      auto& v = v_[idx];
      ++idx;
      if (m.size() != p.value.size()) throw ShapeError("Adam: moment shape differs for '" + p.name + "'");
      auto val = p.value.values();
      const auto grad = p.grad.values();
      for (std::size_t j = 0; j < val.size(); ++j) {
        const double g = static_cast<double>(grad[j]);
        m[j] = opts_.beta1 * m[j] + (1.0 - opts_.beta1) * g;
        v[j] = opts_.beta2 * v[j] + (1.0 - opts_.beta2) * g * g;
        const double mh = m[j] / c1, vh = v[j] / c2;
        val[j] = static_cast<Real>(static_cast<double>(val[j]) - opts_.lr * mh / (std::sqrt(vh) + opts_.eps));
      }
    }
  }

 private:
  AdamOptions opts_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace disenhan::train
