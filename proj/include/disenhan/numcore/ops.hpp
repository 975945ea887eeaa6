#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "disenhan/numcore/tape.hpp"

// Differentiable primitives. Each op computes its value eagerly and, when any
// input requires a gradient, records the matching vector-Jacobian product.

namespace disenhan::num {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <class Real>
void accumulate(Tape<Real>& tape, std::size_t id, std::span<const Real> g) {
  if (!tape.requires_grad(id)) return;
  auto dst = tape.grad(id);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace detail

/// W·x (+ b). `x` is a vector [n] or a batch of row vectors [m, n]; `W` is [p, n];
/// the optional bias is [p]. Returns [p] or [m, p].
template <class Real>
Var<Real> affine(Var<Real> x, Var<Real> W, std::optional<Var<Real>> b = std::nullopt) {
  Tape<Real>& tape = *x.tape;
  const auto& xs = x.shape();
  const auto& ws = W.shape();
  detail::require(ws.size() == 2 && (xs.size() == 1 || xs.size() == 2) && xs.back() == ws[1],
                  "affine: shape mismatch, x " + shape_str(xs) + " vs W " + shape_str(ws));
  const std::size_t n = ws[1], p = ws[0];
  const std::size_t m = xs.size() == 1 ? 1 : xs[0];
  if (b) {
    detail::require(b->shape() == Shape{p},
                    "affine: bias " + shape_str(b->shape()) + " does not match W " + shape_str(ws));
  }
  Shape out_shape = xs.size() == 1 ? Shape{p} : Shape{m, p};
  Tensor<Real> out(out_shape);
  const Real* xv = x.value().data();
  const Real* wv = W.value().data();
  const Real* bv = b ? b->value().data() : nullptr;
  Real* ov = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* xi = xv + i * n;
    for (std::size_t j = 0; j < p; ++j) {
      const Real* wj = wv + j * n;
      Real acc = bv ? bv[j] : Real(0);
      for (std::size_t k = 0; k < n; ++k) acc += xi[k] * wj[k];
      ov[i * p + j] = acc;
    }
  }
  std::vector<Var<Real>> inputs{x, W};
  if (b) inputs.push_back(*b);
  const std::size_t xid = x.id, wid = W.id;
  const std::optional<std::size_t> bid = b ? std::optional<std::size_t>(b->id) : std::nullopt;
  return tape.record(std::move(out), inputs, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    const Real* xv = t.value(xid).data();
    const Real* wv = t.value(wid).data();
    if (t.requires_grad(xid)) {
      Real* dx = t.grad(xid).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) {
          const Real gij = g[i * p + j];
          if (gij == Real(0)) continue;
          const Real* wj = wv + j * n;
          Real* dxi = dx + i * n;
          for (std::size_t k = 0; k < n; ++k) dxi[k] += gij * wj[k];
        }
    }
    if (t.requires_grad(wid)) {
      Real* dw = t.grad(wid).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) {
          const Real gij = g[i * p + j];
          if (gij == Real(0)) continue;
          const Real* xi = xv + i * n;
          Real* dwj = dw + j * n;
          for (std::size_t k = 0; k < n; ++k) dwj[k] += gij * xi[k];
        }
    }
    if (bid && t.requires_grad(*bid)) {
      auto db = t.grad(*bid);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) db[j] += g[i * p + j];
    }
  });
}

template <class Real>
Var<Real> affine(Var<Real> x, Var<Real> W, Var<Real> b) {
  return affine(x, W, std::optional<Var<Real>>(b));
}

/// Batched matrix product: [B, m, n] x [B, n, p] -> [B, m, p].
template <class Real>
Var<Real> bmm(Var<Real> a, Var<Real> c) {
  Tape<Real>& tape = *a.tape;
  const auto& as = a.shape();
  const auto& cs = c.shape();
  detail::require(as.size() == 3 && cs.size() == 3 && as[0] == cs[0] && as[2] == cs[1],
                  "bmm: shape mismatch, " + shape_str(as) + " vs " + shape_str(cs));
  const std::size_t B = as[0], m = as[1], n = as[2], p = cs[2];
  Tensor<Real> out(Shape{B, m, p});
  const Real* av = a.value().data();
  const Real* cv = c.value().data();
  Real* ov = out.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < m; ++i) {
      Real* oi = ov + (b * m + i) * p;
      for (std::size_t k = 0; k < n; ++k) {
        const Real aik = av[(b * m + i) * n + k];
        if (aik == Real(0)) continue;
        const Real* ck = cv + (b * n + k) * p;
        for (std::size_t j = 0; j < p; ++j) oi[j] += aik * ck[j];
      }
    }
  const std::size_t aid = a.id, cid = c.id;
  return tape.record(std::move(out), {a, c}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    const Real* av = t.value(aid).data();
    const Real* cv = t.value(cid).data();
    if (t.requires_grad(aid)) {
      Real* da = t.grad(aid).data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < m; ++i) {
          const Real* gi = g.data() + (b * m + i) * p;
          for (std::size_t k = 0; k < n; ++k) {
            const Real* ck = cv + (b * n + k) * p;
            Real acc = 0;
            for (std::size_t j = 0; j < p; ++j) acc += gi[j] * ck[j];
            da[(b * m + i) * n + k] += acc;
          }
        }
    }
    if (t.requires_grad(cid)) {
      Real* dc = t.grad(cid).data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < m; ++i) {
          const Real* gi = g.data() + (b * m + i) * p;
          for (std::size_t k = 0; k < n; ++k) {
            const Real aik = av[(b * m + i) * n + k];
            if (aik == Real(0)) continue;
            Real* dck = dc + (b * n + k) * p;
            for (std::size_t j = 0; j < p; ++j) dck[j] += aik * gi[j];
          }
        }
    }
  });
}

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  detail::require(a.shape() == b.shape(),
                  "add: shape mismatch, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<Real> out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    detail::accumulate(t, aid, g);
    detail::accumulate(t, bid, g);
  });
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  detail::require(a.shape() == b.shape(),
                  "mul: shape mismatch, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<Real> out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    if (t.requires_grad(aid)) {
      auto da = t.grad(aid);
      const auto bv = t.value(bid).values();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bid)) {
      auto db = t.grad(bid);
      const auto av = t.value(aid).values();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

template <class Real>
Var<Real> scale(Var<Real> a, Real s) {
  Tensor<Real> out = a.value();
  for (auto& v : out.values()) v *= s;
  const std::size_t aid = a.id;
  return a.tape->record(std::move(out), {a}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    auto da = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * s;
  });
}

enum class Activation { relu, tanh, sigmoid };

template <class Real>
Real sigmoid_value(Real s) {
  return Real(1) / (Real(1) + std::exp(-s));
}

/// Applies an activation per element.
template <class Real>
Var<Real> elementwise(Activation act, Var<Real> x) {
  Tensor<Real> out = x.value();
  for (auto& v : out.values()) {
    switch (act) {
      case Activation::relu: v = v > Real(0) ? v : Real(0); break;
      case Activation::tanh: v = std::tanh(v); break;
      case Activation::sigmoid: v = sigmoid_value(v); break;
    }
  }
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    const auto xv = t.value(xid).values();
    const auto yv = t.value(self).values();
    auto dx = t.grad(xid);
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (act) {
        case Activation::relu: dx[i] += xv[i] > Real(0) ? g[i] : Real(0); break;
        case Activation::tanh: dx[i] += g[i] * (Real(1) - yv[i] * yv[i]); break;
        case Activation::sigmoid: dx[i] += g[i] * yv[i] * (Real(1) - yv[i]); break;
      }
    }
  });
}

template <class Real>
Var<Real> relu(Var<Real> x) { return elementwise(Activation::relu, x); }
template <class Real>
Var<Real> tanh(Var<Real> x) { return elementwise(Activation::tanh, x); }
template <class Real>
Var<Real> sigmoid(Var<Real> x) { return elementwise(Activation::sigmoid, x); }

/// Softmax over the last dimension restricted to unmasked entries. Masked entries
/// get exactly zero weight. Throws EmptyGroupError when a group is fully masked.
template <class Real>
Var<Real> masked_softmax(Var<Real> e, const Mask& mask) {
  const auto& es = e.shape();
  detail::require(!es.empty() && mask.size() == e.size(),
                  "masked_softmax: mask of " + std::to_string(mask.size()) + " entries for scores " +
                      shape_str(es));
  const std::size_t n = es.back();
  const std::size_t groups = n == 0 ? 0 : e.size() / n;
  Tensor<Real> out(es);
  const auto ev = e.value().values();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t off = gi * n;
    Real mx = -std::numeric_limits<Real>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[off + j]) {
        mx = std::max(mx, ev[off + j]);
        any = true;
      }
    if (!any) throw EmptyGroupError("masked_softmax: empty relation group at index " + std::to_string(gi));
    Real z = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[off + j]) {
        out[off + j] = std::exp(ev[off + j] - mx);
        z += out[off + j];
      }
    for (std::size_t j = 0; j < n; ++j) out[off + j] /= z;
  }
  const std::size_t eid = e.id;
  return e.tape->record(std::move(out), {e}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    const auto y = t.value(self).values();
    auto de = t.grad(eid);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t off = gi * n;
      Real dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[off + j] * y[off + j];
      for (std::size_t j = 0; j < n; ++j) de[off + j] += y[off + j] * (g[off + j] - dot);
    }
  });
}

template <class Real>
Var<Real> softmax(Var<Real> e) {
  return masked_softmax(e, Mask(e.size(), 1));
}

/// Divides each contiguous group of `group` values by its Euclidean norm. Groups
/// with norm <= eps pass through unchanged (and so does their gradient).
template <class Real>
Var<Real> l2_normalize(Var<Real> x, std::size_t group = 0, Real eps = Real(1e-12)) {
  if (group == 0) group = x.shape().empty() ? 1 : x.shape().back();
  detail::require(group > 0 && x.size() % group == 0,
                  "l2_normalize: group " + std::to_string(group) + " does not divide " + shape_str(x.shape()));
  const std::size_t groups = x.size() / group;
  Tensor<Real> out = x.value();
  std::vector<Real> norms(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    Real ss = 0;
    for (std::size_t j = 0; j < group; ++j) ss += out[gi * group + j] * out[gi * group + j];
    const Real nrm = std::sqrt(ss);
    norms[gi] = nrm;
    if (nrm > eps)
      for (std::size_t j = 0; j < group; ++j) out[gi * group + j] /= nrm;
  }
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x},
                     [=, norms = std::move(norms)](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
                       const auto y = t.value(self).values();
                       auto dx = t.grad(xid);
                       for (std::size_t gi = 0; gi < groups; ++gi) {
                         const std::size_t off = gi * group;
                         if (norms[gi] <= eps) {
                           for (std::size_t j = 0; j < group; ++j) dx[off + j] += g[off + j];
                           continue;
                         }
                         Real dot = 0;
                         for (std::size_t j = 0; j < group; ++j) dot += g[off + j] * y[off + j];
                         for (std::size_t j = 0; j < group; ++j)
                           dx[off + j] += (g[off + j] - y[off + j] * dot) / norms[gi];
                       }
                     });
}

/// Row gather from a [N, d] table; index -1 yields a zero row.
template <class Real>
Var<Real> gather_rows(Var<Real> table, std::vector<std::int64_t> index) {
  const auto& ts = table.shape();
  detail::require(ts.size() == 2, "gather_rows: table must be 2-D, got " + shape_str(ts));
  const std::size_t N = ts[0], d = ts[1];
  Tensor<Real> out(Shape{index.size(), d});
  const Real* tv = table.value().data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::int64_t r = index[i];
    if (r < 0) continue;
    detail::require(static_cast<std::size_t>(r) < N,
                    "gather_rows: row " + std::to_string(r) + " out of " + std::to_string(N));
    std::copy_n(tv + r * d, d, out.data() + i * d);
  }
  const std::size_t tid = table.id;
  return table.tape->record(std::move(out), {table},
                            [=, index = std::move(index)](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
                              Real* dt = t.grad(tid).data();
                              for (std::size_t i = 0; i < index.size(); ++i) {
                                if (index[i] < 0) continue;
                                Real* row = dt + index[i] * d;
                                for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
                              }
                            });
}

/// out[i, j] = x[i, j] * s[i] for x [m, d] (any shape with leading size m) and s [m].
template <class Real>
Var<Real> scale_rows(Var<Real> x, Var<Real> s) {
  const std::size_t m = s.size();
  detail::require(m > 0 && x.size() % m == 0,
                  "scale_rows: " + shape_str(x.shape()) + " vs scales " + shape_str(s.shape()));
  const std::size_t d = x.size() / m;
  Tensor<Real> out = x.value();
  const auto sv = s.value().values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= sv[i];
  const std::size_t xid = x.id, sid = s.id;
  return x.tape->record(std::move(out), {x, s}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    const auto sv = t.value(sid).values();
    const auto xv = t.value(xid).values();
    if (t.requires_grad(xid)) {
      auto dx = t.grad(xid);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += g[i * d + j] * sv[i];
    }
    if (t.requires_grad(sid)) {
      auto ds = t.grad(sid);
      for (std::size_t i = 0; i < m; ++i) {
        Real acc = 0;
        for (std::size_t j = 0; j < d; ++j) acc += g[i * d + j] * xv[i * d + j];
        ds[i] += acc;
      }
    }
  });
}

/// out[a, b, c] = x[a, b, c] + y[a, c]: broadcasts y over the middle axis.
template <class Real>
Var<Real> add_broadcast_mid(Var<Real> x, Var<Real> y) {
  const auto& xs = x.shape();
  const auto& ys = y.shape();
  detail::require(xs.size() == 3 && ys.size() == 2 && xs[0] == ys[0] && xs[2] == ys[1],
                  "add_broadcast_mid: " + shape_str(xs) + " vs " + shape_str(ys));
  const std::size_t A = xs[0], B = xs[1], C = xs[2];
  Tensor<Real> out = x.value();
  const auto yv = y.value().values();
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) out[(a * B + b) * C + c] += yv[a * C + c];
  const std::size_t xid = x.id, yid = y.id;
  return x.tape->record(std::move(out), {x, y}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    detail::accumulate(t, xid, g);
    if (t.requires_grad(yid)) {
      auto dy = t.grad(yid);
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) dy[a * C + c] += g[(a * B + b) * C + c];
    }
  });
}

template <class Real>
Var<Real> reshape(Var<Real> x, Shape shape) {
  Tensor<Real> out = x.value().reshaped(std::move(shape));
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x},
                        [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) { detail::accumulate(t, xid, g); });
}

/// Contiguous flat slice [offset, offset + count) returned as a vector.
template <class Real>
Var<Real> slice(Var<Real> x, std::size_t offset, std::size_t count) {
  detail::require(offset + count <= x.size(),
                  "slice: [" + std::to_string(offset) + ", +" + std::to_string(count) + ") of " +
                      shape_str(x.shape()));
  const auto xv = x.value().values();
  Tensor<Real> out(Shape{count}, std::vector<Real>(xv.begin() + offset, xv.begin() + offset + count));
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    auto dx = t.grad(xid);
    for (std::size_t i = 0; i < count; ++i) dx[offset + i] += g[i];
  });
}

/// Row-wise inner product of two [m, d] arrays -> [m].
template <class Real>
Var<Real> rowdot(Var<Real> a, Var<Real> b) {
  detail::require(a.shape() == b.shape() && a.shape().size() == 2,
                  "rowdot: shape mismatch, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], d = a.shape()[1];
  Tensor<Real> out(Shape{m});
  const auto av = a.value().values();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < m; ++i) {
    Real acc = 0;
    for (std::size_t j = 0; j < d; ++j) acc += av[i * d + j] * bv[i * d + j];
    out[i] = acc;
  }
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    const auto av = t.value(aid).values();
    const auto bv = t.value(bid).values();
    if (t.requires_grad(aid)) {
      auto da = t.grad(aid);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) da[i * d + j] += g[i] * bv[i * d + j];
    }
    if (t.requires_grad(bid)) {
      auto db = t.grad(bid);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) db[i * d + j] += g[i] * av[i * d + j];
    }
  });
}

/// Stacks 2-D arrays with equal column counts on top of each other.
template <class Real>
Var<Real> concat_rows(std::span<const Var<Real>> parts) {
  detail::require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t d = parts[0].shape().size() == 2 ? parts[0].shape()[1] : 0;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    detail::require(p.shape().size() == 2 && p.shape()[1] == d,
                    "concat_rows: " + shape_str(p.shape()) + " vs column count " + std::to_string(d));
    rows += p.shape()[0];
  }
  Tensor<Real> out(Shape{rows, d});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + off);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += p.size();
  }
  return parts[0].tape->record(std::move(out), parts,
                               [ids = std::move(ids), offsets = std::move(offsets)](
                                   Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
                                 for (std::size_t i = 0; i < ids.size(); ++i) {
                                   if (!t.requires_grad(ids[i])) continue;
                                   auto dst = t.grad(ids[i]);
                                   for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g[offsets[i] + j];
                                 }
                               });
}

template <class Real>
Var<Real> sum(Var<Real> x) {
  Real acc = 0;
  for (Real v : x.value().values()) acc += v;
  Tensor<Real> out(Shape{1}, {acc});
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
    for (auto& d : t.grad(xid)) d += g[0];
  });
}

template <class Real>
Var<Real> mean(Var<Real> x) {
  detail::require(x.size() > 0, "mean: empty input");
  return scale(sum(x), Real(1) / static_cast<Real>(x.size()));
}

/// Mean binary cross-entropy of probabilities `yhat` against 0/1 labels. The
/// probabilities are clamped to [clamp, 1 - clamp] before the logarithm; outside
/// that range the gradient is zero.
template <class Real>
Var<Real> binary_cross_entropy(Var<Real> yhat, std::vector<Real> labels, Real clamp = Real(1e-7)) {
  detail::require(labels.size() == yhat.size() && !labels.empty(),
                  "binary_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                      shape_str(yhat.shape()));
  const auto yv = yhat.value().values();
  const Real lo = clamp, hi = Real(1) - clamp;
  const std::size_t n = labels.size();
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != Real(0) && labels[i] != Real(1)) throw Error("binary_cross_entropy: label must be 0 or 1");
    const Real p = std::clamp(yv[i], lo, hi);
    acc -= labels[i] * std::log(p) + (Real(1) - labels[i]) * std::log(Real(1) - p);
  }
  Tensor<Real> out(Shape{1}, {acc / static_cast<Real>(n)});
  const std::size_t yid = yhat.id;
  return yhat.tape->record(std::move(out), {yhat},
                           [=, labels = std::move(labels)](Tape<Real>& t, [[maybe_unused]] std::size_t self, std::span<const Real> g) {
                             const auto yv = t.value(yid).values();
                             auto dy = t.grad(yid);
                             const Real s = g[0] / static_cast<Real>(n);
                             for (std::size_t i = 0; i < n; ++i) {
                               const Real p = yv[i];
                               if (p < lo || p > hi) continue;
                               dy[i] -= s * (labels[i] / p - (Real(1) - labels[i]) / (Real(1) - p));
                             }
                           });
}

}  // namespace disenhan::num
