#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "disenhan/numcore/tape.hpp"

namespace disenhan::num {

template <class Real>
using ScalarFn = std::function<Var<Real>(Tape<Real>&)>;

template <class Real>
struct GradCheckResult {
  Real max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  Real worst_analytic = 0;
  Real worst_numeric = 0;
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  // 0 checks every coordinate; otherwise a seeded random subset per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of `f` against central differences
/// (f(θ+h) - f(θ-h)) / 2h. The error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <class Real>
GradCheckResult<Real> grad_check(const ScalarFn<Real>& f, std::span<Parameter<Real>* const> params, Real h,
                                 GradCheckOptions opts = {}) {
  auto evaluate = [&] {
    Tape<Real> tape;
    const Real v = f(tape).value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
    return v;
  };

  for (auto* p : params) std::fill(p->grad.values().begin(), p->grad.values().end(), Real(0));
  {
    Tape<Real> tape;
    Var<Real> out = f(tape);
    if (out.size() != 1) throw ShapeError("grad_check: objective must be scalar");
    if (!std::isfinite(out.value()[0])) throw NumericError("grad_check: objective is not finite");
    tape.backward(out);
  }

  GradCheckResult<Real> result;
  std::mt19937_64 rng(opts.seed);
  for (auto* p : params) {
    const std::vector<Real> analytic(p->grad.values().begin(), p->grad.values().end());
    std::vector<std::size_t> coords(p->value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opts.max_coords_per_param != 0 && coords.size() > opts.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_param);
    }
    for (std::size_t i : coords) {
      const Real saved = p->value[i];
      p->value[i] = saved + h;
      const Real fp = evaluate();
      p->value[i] = saved - h;
      const Real fm = evaluate();
      p->value[i] = saved;
      const Real numeric = (fp - fm) / (Real(2) * h);
      const Real a = analytic[i];
      const Real denom = std::max({std::abs(a), std::abs(numeric), Real(1e-8)});
      const Real err = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (err > result.max_rel_error || result.worst_param.empty()) {
        if (err >= result.max_rel_error) {
          result.max_rel_error = err;
          result.worst_param = p->name;
          result.worst_index = i;
          result.worst_analytic = a;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace disenhan::num
