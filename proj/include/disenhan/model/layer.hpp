#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "disenhan/hin/graph.hpp"
#include "disenhan/numcore/ops.hpp"
#include "disenhan/rng.hpp"

namespace disenhan::model {

/// Training-time dropout. Inactive when `rng` is null or the rate is zero.
struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const noexcept { return rate > 0.0 && rng != nullptr; }
};

/// Projects features into K channels: c_k = normalize(relu(W_k x)). `x` is [d_in]
/// or [m, d_in]; `projection` stacks the K channel matrices as [d_out, d_in].
template <class Real>
num::Var<Real> content_transform(num::Var<Real> x, num::Var<Real> projection, std::size_t aspects,
                                 Real eps = Real(1e-12), Dropout dropout = {}) {
  const std::size_t d_out = projection.shape().at(0);
  if (aspects == 0 || d_out % aspects != 0) {
    throw ShapeError("content_transform: d_out " + std::to_string(d_out) + " not divisible by " +
                     std::to_string(aspects) + " aspects");
  }
  auto h = num::relu(num::affine(x, projection));
  if (dropout.active()) {
    num::Tensor<Real> keep(h.shape());
    const Real s = Real(1) / static_cast<Real>(1.0 - dropout.rate);
    for (auto& v : keep.values()) v = uniform_unit(*dropout.rng) < dropout.rate ? Real(0) : s;
    h = num::mul(h, h.tape->constant(std::move(keep)));
  }
  return num::l2_normalize(h, d_out / aspects, eps);
}

/// Sampled neighbors of T targets under one relation, already projected to channels.
template <class Real>
struct RelationGroup {
  hin::RelationId relation;
  num::Var<Real> neighbors;   // [T * F, d_out]
  num::Mask mask;             // [T * F]
  std::size_t fanout = 0;
  std::vector<Real> present;  // [T]; 0 drops the relation from that target's relation set
};

/// Parameters a relation uses inside one layer.
template <class Real>
struct RelationParams {
  num::Var<Real> attention;  // [2 dk]
  num::Var<Real> semantic;   // [dk]
  num::Var<Real> transform;  // [dk, dk]
};

/// Fills `present` from the mask and, for targets without any real neighbor,
/// unmasks slot 0 so the softmax stays defined. Such rows carry presence 0 and
/// never reach the output.
template <class Real>
void finalize_group(RelationGroup<Real>& g, std::size_t targets) {
  g.present.assign(targets, Real(0));
  for (std::size_t t = 0; t < targets; ++t) {
    bool any = false;
    for (std::size_t s = 0; s < g.fanout; ++s) any = any || g.mask[t * g.fanout + s];
    g.present[t] = any ? Real(1) : Real(0);
    if (!any) g.mask[t * g.fanout] = 1;
  }
}

namespace detail {

inline num::Mask drop_slots(const num::Mask& mask, std::size_t fanout, Dropout dropout) {
  if (!dropout.active()) return mask;
  num::Mask out = mask;
  const std::size_t rows = mask.size() / fanout;
  for (std::size_t t = 0; t < rows; ++t) {
    bool kept = false;
    for (std::size_t s = 0; s < fanout; ++s) {
      auto& m = out[t * fanout + s];
      if (m && uniform_unit(*dropout.rng) < dropout.rate) m = 0;
      kept = kept || m;
    }
    if (!kept)
      for (std::size_t s = 0; s < fanout; ++s) out[t * fanout + s] = mask[t * fanout + s];
  }
  return out;
}

// Source-side half of the attention logits; constant across routing iterations.
template <class Real>
num::Var<Real> source_scores(const RelationGroup<Real>& g, num::Var<Real> attention, std::size_t aspects) {
  const std::size_t d = g.neighbors.shape().at(1);
  const std::size_t dk = d / aspects;
  const std::size_t T = g.neighbors.shape().at(0) / g.fanout;
  auto a_src = num::reshape(num::slice(attention, dk, dk), {1, dk});
  auto s = num::affine(num::reshape(g.neighbors, {T * g.fanout * aspects, dk}), a_src);
  return num::reshape(s, {T, g.fanout, aspects});
}

template <class Real>
num::Var<Real> intra_relation_attention(num::Var<Real> z_prev, const RelationGroup<Real>& g,
                                        num::Var<Real> attention, num::Var<Real> r_prev, num::Var<Real> src_scores,
                                        std::size_t aspects, Dropout dropout) {
  const std::size_t T = z_prev.shape().at(0), d = z_prev.shape().at(1);
  const std::size_t dk = d / aspects, F = g.fanout;
  auto a_tgt = num::reshape(num::slice(attention, 0, dk), {1, dk});
  // e^k_{t,s} = relu(a_tgt . z_{t,k} + a_src . c_{s,k})
  auto tgt = num::reshape(num::affine(num::reshape(z_prev, {T * aspects, dk}), a_tgt), {T, aspects});
  auto e = num::relu(num::add_broadcast_mid(src_scores, tgt));
  // e_{t,s} = sum_k r_k e^k_{t,s}; one softmax per relation shared by all aspects
  auto e_rel = num::reshape(num::bmm(e, num::reshape(r_prev, {T, aspects, 1})), {T, F});
  auto weights = num::masked_softmax(e_rel, drop_slots(g.mask, F, dropout));
  auto agg = num::bmm(num::reshape(weights, {T, 1, F}), num::reshape(g.neighbors, {T, F, d}));
  return num::relu(num::reshape(agg, {T, d}));
}

}  // namespace detail

/// Per-aspect summary z^rel_k of one relation's neighbors for T targets.
/// `z_prev` is [T, d_out]; `r_prev` is [T, K]. Returns [T, d_out].
template <class Real>
num::Var<Real> intra_relation_attention(num::Var<Real> z_prev, const RelationGroup<Real>& g,
                                        num::Var<Real> attention, num::Var<Real> r_prev, std::size_t aspects,
                                        Dropout dropout = {}) {
  return detail::intra_relation_attention(z_prev, g, attention, r_prev, detail::source_scores(g, attention, aspects),
                                          aspects, dropout);
}

template <class Real>
struct InterRelationResult {
  num::Var<Real> weights;      // r, [T, K]; each row on the simplex
  num::Var<Real> transformed;  // W z^rel_k stacked, [T, d_out]
};

/// Aspect weights r_k = softmax_k(q . tanh(W z^rel_k)) for one relation.
template <class Real>
InterRelationResult<Real> inter_relation_weights(num::Var<Real> z_rel, num::Var<Real> semantic,
                                                 num::Var<Real> transform, std::size_t aspects) {
  const std::size_t T = z_rel.shape().at(0), d = z_rel.shape().at(1);
  const std::size_t dk = d / aspects;
  auto wz = num::affine(num::reshape(z_rel, {T * aspects, dk}), transform);
  auto scores = num::affine(num::tanh(wz), num::reshape(semantic, {1, dk}));
  auto r = num::softmax(num::reshape(scores, {T, aspects}));
  return {r, num::reshape(wz, {T, d})};
}

template <class Real>
struct PropagateResult {
  num::Var<Real> z;                     // [T, d_out], unit norm per aspect
  std::vector<num::Var<Real>> weights;  // final r per group, [T, K]
  // deltas[i] = mean over targets of ||z^(i+1) - z^(i)||_2 over the full d_out vector
  std::vector<Real> deltas;
  // iterates[i] = z^(i+1) values when trace was requested
  std::vector<num::Tensor<Real>> iterates;
};

/// Iterative routing for T targets of one node type: alternates intra-relation
/// attention with inter-relation aspect weighting for `iterations` rounds and
/// updates z_k = normalize(c_k + sum_rel r_{rel,k} W z^rel_k).
template <class Real>
PropagateResult<Real> propagate(num::Var<Real> c_target, std::span<const RelationGroup<Real>> groups,
                                std::span<const RelationParams<Real>> rel_params, std::size_t aspects,
                                std::size_t iterations, Real eps = Real(1e-12), Dropout dropout = {},
                                bool trace = false) {
  if (groups.size() != rel_params.size()) throw ShapeError("propagate: one parameter set per relation group");
  num::Tape<Real>& tape = *c_target.tape;
  const std::size_t T = c_target.shape().at(0), d = c_target.shape().at(1);
  if (aspects == 0 || d % aspects != 0) throw ShapeError("propagate: d_out not divisible by aspects");
  const std::size_t dk = d / aspects;

  PropagateResult<Real> res;
  std::vector<num::Var<Real>> r(groups.size());
  std::vector<num::Var<Real>> src(groups.size());
  std::vector<num::Var<Real>> presence(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    if (g.neighbors.shape().at(0) != T * g.fanout || g.neighbors.shape().at(1) != d || g.mask.size() != T * g.fanout ||
        g.present.size() != T) {
      throw ShapeError("propagate: relation group " + std::to_string(gi) + " has inconsistent shapes");
    }
    r[gi] = tape.constant(num::Tensor<Real>::filled({T, aspects}, Real(1) / static_cast<Real>(aspects)));
    src[gi] = detail::source_scores(g, rel_params[gi].attention, aspects);
    num::Tensor<Real> p({T, aspects});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < aspects; ++k) p[t * aspects + k] = g.present[t];
    presence[gi] = tape.constant(std::move(p));
  }

  num::Var<Real> z = num::l2_normalize(c_target, dk, eps);
  if (groups.empty()) {
    res.z = z;
    return res;
  }
  for (std::size_t it = 0; it < iterations; ++it) {
    num::Var<Real> total = c_target;
    std::vector<num::Var<Real>> next_r(groups.size());
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& rp = rel_params[gi];
      auto z_rel = detail::intra_relation_attention(z, groups[gi], rp.attention, r[gi], src[gi], aspects, dropout);
      auto inter = inter_relation_weights(z_rel, rp.semantic, rp.transform, aspects);
      auto w = num::mul(inter.weights, presence[gi]);
      auto contrib = num::scale_rows(num::reshape(inter.transformed, {T * aspects, dk}), num::reshape(w, {T * aspects}));
      total = num::add(total, num::reshape(contrib, {T, d}));
      next_r[gi] = inter.weights;
    }
    auto z_next = num::l2_normalize(total, dk, eps);
    Real delta = 0;
    const auto a = z.value().values();
    const auto b = z_next.value().values();
    for (std::size_t t = 0; t < T; ++t) {
      Real ss = 0;
      for (std::size_t j = 0; j < d; ++j) ss += (b[t * d + j] - a[t * d + j]) * (b[t * d + j] - a[t * d + j]);
      delta += std::sqrt(ss);
    }
    res.deltas.push_back(delta / static_cast<Real>(T));
    if (trace) res.iterates.push_back(z_next.value());
    z = z_next;
    r = std::move(next_r);
  }
  res.z = z;
  res.weights = std::move(r);
  return res;
}

/// Single-target routing: `c_target` is [d_out]; each group holds one target.
template <class Real>
PropagateResult<Real> propagate_node(num::Var<Real> c_target, std::span<const RelationGroup<Real>> groups,
                                     std::span<const RelationParams<Real>> rel_params, std::size_t aspects,
                                     std::size_t iterations, Real eps = Real(1e-12), bool trace = false) {
  auto row = c_target.shape().size() == 1 ? num::reshape(c_target, {1, c_target.size()}) : c_target;
  return propagate(row, groups, rel_params, aspects, iterations, eps, Dropout{}, trace);
}

/// Sum over aspects of per-aspect inner products.
template <class Real>
Real score(std::span<const Real> z_u, std::span<const Real> z_v, std::size_t aspects_u, std::size_t aspects_v) {
  if (aspects_u != aspects_v) {
    throw ShapeError("score: aspect count mismatch (" + std::to_string(aspects_u) + " vs " +
                     std::to_string(aspects_v) + ")");
  }
  if (z_u.size() != z_v.size()) throw ShapeError("score: embedding sizes differ");
  Real s = 0;
  for (std::size_t i = 0; i < z_u.size(); ++i) s += z_u[i] * z_v[i];
  return s;
}

template <class Real>
Real predict(Real s) {
  return num::sigmoid_value(s);
}

}  // namespace disenhan::model
