#pragma once

// Plain-loop restatement of the routing layer for one target, written without
// the tape so it can serve as an independent oracle for the batched version.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace disenhan::reference {

using Vec = std::vector<double>;

inline double relu(double x) { return x > 0 ? x : 0.0; }

inline void normalize_chunks(Vec& v, std::size_t dk, double eps = 1e-12) {
  for (std::size_t o = 0; o < v.size(); o += dk) {
    double ss = 0;
    for (std::size_t j = 0; j < dk; ++j) ss += v[o + j] * v[o + j];
    const double n = std::sqrt(ss);
    if (n <= eps) continue;
    for (std::size_t j = 0; j < dk; ++j) v[o + j] /= n;
  }
}

// P is [d_out x d_in] row-major.
inline Vec content(const Vec& x, const Vec& P, std::size_t d_out, std::size_t aspects) {
  const std::size_t d_in = x.size();
  Vec c(d_out);
  for (std::size_t i = 0; i < d_out; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d_in; ++j) s += P[i * d_in + j] * x[j];
    c[i] = relu(s);
  }
  normalize_chunks(c, d_out / aspects);
  return c;
}

struct Relation {
  std::vector<Vec> sources;  // channel features, each [d]
  Vec att;                   // [2 dk]
  Vec sem;                   // [dk]
  Vec W;                     // [dk x dk]
};

struct Result {
  Vec z;
  std::vector<Vec> r;  // per relation, [K]; empty for relations without sources
  std::vector<double> deltas;
};

inline Vec matvec(const Vec& W, const double* x, std::size_t dk) {
  Vec y(dk, 0.0);
  for (std::size_t i = 0; i < dk; ++i)
    for (std::size_t j = 0; j < dk; ++j) y[i] += W[i * dk + j] * x[j];
  return y;
}

inline Result propagate(const Vec& c, const std::vector<Relation>& rels, std::size_t K, std::size_t I) {
  const std::size_t d = c.size(), dk = d / K;
  Result res;
  res.z = c;
  normalize_chunks(res.z, dk);
  res.r.assign(rels.size(), Vec(K, 1.0 / static_cast<double>(K)));
  for (std::size_t it = 0; it < I; ++it) {
    Vec total = c;
    std::vector<Vec> next_r = res.r;
    for (std::size_t ri = 0; ri < rels.size(); ++ri) {
      const Relation& rel = rels[ri];
      if (rel.sources.empty()) continue;
      const std::size_t S = rel.sources.size();
      Vec e(S, 0.0);
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t k = 0; k < K; ++k) {
          double ek = 0;
          for (std::size_t j = 0; j < dk; ++j)
            ek += rel.att[j] * res.z[k * dk + j] + rel.att[dk + j] * rel.sources[s][k * dk + j];
          e[s] += res.r[ri][k] * relu(ek);
        }
      }
      const double mx = *std::max_element(e.begin(), e.end());
      double den = 0;
      for (double& v : e) den += (v = std::exp(v - mx));
      Vec zrel(d, 0.0);
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t j = 0; j < d; ++j) zrel[j] += e[s] / den * rel.sources[s][j];
      for (double& v : zrel) v = relu(v);
      Vec scores(K);
      std::vector<Vec> wz(K);
      for (std::size_t k = 0; k < K; ++k) {
        wz[k] = matvec(rel.W, zrel.data() + k * dk, dk);
        double sc = 0;
        for (std::size_t j = 0; j < dk; ++j) sc += rel.sem[j] * std::tanh(wz[k][j]);
        scores[k] = sc;
      }
      const double smx = *std::max_element(scores.begin(), scores.end());
      double sden = 0;
      for (double& v : scores) sden += (v = std::exp(v - smx));
      for (std::size_t k = 0; k < K; ++k) {
        next_r[ri][k] = scores[k] / sden;
        for (std::size_t j = 0; j < dk; ++j) total[k * dk + j] += next_r[ri][k] * wz[k][j];
      }
    }
    normalize_chunks(total, dk);
    double delta = 0;
    for (std::size_t j = 0; j < d; ++j) delta += (total[j] - res.z[j]) * (total[j] - res.z[j]);
    res.deltas.push_back(std::sqrt(delta));
    res.z = std::move(total);
    res.r = std::move(next_r);
  }
  for (std::size_t ri = 0; ri < rels.size(); ++ri)
    if (rels[ri].sources.empty()) res.r[ri].clear();
  return res;
}

}  // namespace disenhan::reference
