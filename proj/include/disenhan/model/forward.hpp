#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "disenhan/hin/sampling.hpp"
#include "disenhan/model/layer.hpp"
#include "disenhan/model/params.hpp"

namespace disenhan::model {

/// Running sums of final-iteration aspect weights, per layer and relation.
struct AspectWeightStats {
  // sums[l][relation][k], counts[l][relation]
  std::vector<std::vector<std::vector<double>>> sums;
  std::vector<std::vector<std::size_t>> counts;

  void resize(const ModelConfig& cfg, std::size_t relations) {
    sums.assign(cfg.depth(), {});
    counts.assign(cfg.depth(), std::vector<std::size_t>(relations, 0));
    for (std::size_t l = 0; l < cfg.depth(); ++l)
      sums[l].assign(relations, std::vector<double>(cfg.layers[l].aspects, 0.0));
  }

  void merge(const AspectWeightStats& o) {
    if (sums.empty()) {
      *this = o;
      return;
    }
    for (std::size_t l = 0; l < sums.size(); ++l)
      for (std::size_t r = 0; r < sums[l].size(); ++r) {
        counts[l][r] += o.counts[l][r];
        for (std::size_t k = 0; k < sums[l][r].size(); ++k) sums[l][r][k] += o.sums[l][r][k];
      }
  }

  std::vector<double> mean(std::size_t layer, std::size_t relation) const {
    std::vector<double> m = sums.at(layer).at(relation);
    const auto n = counts.at(layer).at(relation);
    for (auto& v : m) v = n ? v / static_cast<double>(n) : 0.0;
    return m;
  }
};

struct ForwardOptions {
  Dropout dropout;  // active only when training
  bool collect_stats = false;
};

template <class Real>
struct ForwardResult {
  num::Var<Real> embeddings;  // [R, d_out of layer 1], one row per distinct root
  std::unordered_map<hin::NodeId, std::size_t> row;
  AspectWeightStats stats;

  std::size_t row_of(hin::NodeId n) const {
    auto it = row.find(n);
    if (it == row.end()) throw GraphError("node is not a root of this computation tree");
    return it->second;
  }
};

namespace detail {

// Nodes grouped by type with a row lookup and a feature matrix per type.
template <class Real>
struct TypedBlock {
  std::vector<std::vector<std::uint32_t>> nodes;
  std::vector<std::unordered_map<std::uint32_t, std::int64_t>> rows;
  std::vector<std::optional<num::Var<Real>>> features;

  TypedBlock(std::size_t types, std::span<const hin::NodeId> members) : nodes(types), rows(types), features(types) {
    for (hin::NodeId n : members) {
      auto& r = rows[n.type.value];
      if (r.emplace(n.index, static_cast<std::int64_t>(nodes[n.type.value].size())).second)
        nodes[n.type.value].push_back(n.index);
    }
  }

  std::int64_t row_of(hin::NodeTypeId t, std::uint32_t index) const {
    const auto& r = rows[t.value];
    auto it = r.find(index);
    if (it == r.end()) throw GraphError("computation tree is not closed under sampled neighbors");
    return it->second;
  }
};

}  // namespace detail

/// Runs the L stacked layers over a computation tree, deepest first. Layer l
/// computes outputs for every node within l-1 hops of the roots; its input
/// features are the previous layer's outputs (the raw feature table for the
/// deepest layer).
template <class Real>
ForwardResult<Real> forward(num::Tape<Real>& tape, ModelParams<Real>& params, const hin::ComputationTree& tree,
                            const ForwardOptions& opts = {}) {
  const ModelConfig& cfg = params.config();
  const hin::Schema& schema = params.schema();
  const std::size_t L = cfg.depth();
  if (tree.depth() != L) {
    throw ShapeError("forward: tree depth " + std::to_string(tree.depth()) + " does not match " +
                     std::to_string(L) + " layers");
  }
  const std::size_t n_types = schema.node_type_count();
  const Real eps = static_cast<Real>(cfg.norm_eps);

  ForwardResult<Real> result;
  if (opts.collect_stats) result.stats.resize(cfg, schema.relation_count());

  auto all_nodes = tree.nodes_up_to(L);
  detail::TypedBlock<Real> inputs(n_types, all_nodes);
  for (std::size_t t = 0; t < n_types; ++t) {
    if (inputs.nodes[t].empty()) continue;
    const hin::NodeTypeId type{static_cast<std::uint32_t>(t)};
    std::vector<std::int64_t> idx(inputs.nodes[t].begin(), inputs.nodes[t].end());
    inputs.features[t] = num::gather_rows(tape.param(params.features(type)), std::move(idx));
  }

  for (std::size_t l = L; l-- > 0;) {
    const LayerShape& shape = cfg.layers[l];
    const std::size_t K = shape.aspects, D = shape.d_out;
    auto members = tree.nodes_up_to(l);
    detail::TypedBlock<Real> targets(n_types, members);

    std::vector<std::optional<num::Var<Real>>> channels(n_types);
    for (std::size_t t = 0; t < n_types; ++t) {
      if (!inputs.features[t]) continue;
      const hin::NodeTypeId type{static_cast<std::uint32_t>(t)};
      channels[t] = content_transform(*inputs.features[t], tape.param(params.projection(l, type)), K, eps, opts.dropout);
    }

    for (std::size_t t = 0; t < n_types; ++t) {
      if (targets.nodes[t].empty()) continue;
      const hin::NodeTypeId type{static_cast<std::uint32_t>(t)};
      const auto& tnodes = targets.nodes[t];
      const std::size_t T = tnodes.size();
      std::vector<std::int64_t> self_rows(T);
      for (std::size_t i = 0; i < T; ++i) self_rows[i] = inputs.row_of(type, tnodes[i]);
      auto c_target = num::gather_rows(*channels[t], std::move(self_rows));

      const auto rels = schema.relations_into(type);
      std::vector<RelationGroup<Real>> groups;
      std::vector<RelationParams<Real>> rparams;
      groups.reserve(rels.size());
      for (std::size_t ri = 0; ri < rels.size(); ++ri) {
        const hin::RelationId rel = rels[ri];
        const hin::NodeTypeId src_type = schema.relation(rel).src_type;
        std::size_t F = 1;
        for (std::uint32_t n : tnodes) F = std::max(F, tree.neighborhoods_of({type, n})[ri].fanout());
        std::vector<std::int64_t> idx(T * F, -1);
        RelationGroup<Real> g;
        g.relation = rel;
        g.fanout = F;
        g.mask.assign(T * F, 0);
        for (std::size_t i = 0; i < T; ++i) {
          const auto& hood = tree.neighborhoods_of({type, tnodes[i]})[ri];
          for (std::size_t s = 0; s < hood.fanout(); ++s) {
            if (!hood.mask[s]) continue;
            idx[i * F + s] = inputs.row_of(src_type, hood.neighbor_ids[s]);
            g.mask[i * F + s] = 1;
          }
        }
        if (channels[src_type.value]) {
          g.neighbors = num::gather_rows(*channels[src_type.value], std::move(idx));
        } else {
          g.neighbors = tape.constant(num::Tensor<Real>({T * F, D}));
        }
        finalize_group(g, T);
        groups.push_back(std::move(g));
        rparams.push_back({tape.param(params.attention(l, rel)), tape.param(params.semantic(l, rel)),
                           tape.param(params.transform(l, rel))});
      }

      auto routed = propagate<Real>(c_target, groups, rparams, K, cfg.iterations, eps, opts.dropout);
      targets.features[t] = routed.z;

      if (opts.collect_stats) {
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
          const auto rv = routed.weights[gi].value().values();
          auto& sums = result.stats.sums[l][groups[gi].relation.value];
          auto& count = result.stats.counts[l][groups[gi].relation.value];
          for (std::size_t i = 0; i < T; ++i) {
            if (groups[gi].present[i] == Real(0)) continue;
            ++count;
            for (std::size_t k = 0; k < K; ++k) sums[k] += static_cast<double>(rv[i * K + k]);
          }
        }
      }
    }
    inputs = std::move(targets);
  }

  std::vector<num::Var<Real>> parts;
  std::size_t offset = 0;
  for (std::size_t t = 0; t < n_types; ++t) {
    if (!inputs.features[t]) continue;
    parts.push_back(*inputs.features[t]);
    for (std::size_t i = 0; i < inputs.nodes[t].size(); ++i)
      result.row.emplace(hin::NodeId{hin::NodeTypeId{static_cast<std::uint32_t>(t)}, inputs.nodes[t][i]}, offset + i);
    offset += inputs.nodes[t].size();
  }
  result.embeddings = parts.size() == 1 ? parts[0] : num::concat_rows<Real>(parts);
  return result;
}

/// Final embeddings for a set of node types, computed without gradients in
/// chunks of roots. Neighborhood samples depend only on (seed, node), so the
/// result does not depend on the chunk size.
template <class Real>
struct EmbeddingTable {
  std::size_t aspects = 0;
  std::size_t dim = 0;
  std::vector<num::Tensor<Real>> per_type;  // [count, dim], empty for types not requested
  AspectWeightStats stats;

  std::span<const Real> of(hin::NodeId n) const {
    const auto& t = per_type.at(n.type.value);
    if (t.size() == 0) throw GraphError("node type was not embedded");
    return t.values().subspan(static_cast<std::size_t>(n.index) * dim, dim);
  }
};

template <class Real>
EmbeddingTable<Real> embed_nodes(ModelParams<Real>& params, const hin::HinGraph& graph,
                                 std::span<const hin::NodeId> nodes, const hin::FanoutPolicy& fanouts,
                                 std::uint64_t seed, std::size_t chunk = 2048, bool collect_stats = false) {
  const ModelConfig& cfg = params.config();
  EmbeddingTable<Real> table;
  table.aspects = cfg.layers[0].aspects;
  table.dim = cfg.layers[0].d_out;
  table.per_type.resize(graph.schema().node_type_count());
  for (hin::NodeId n : nodes) {
    auto& t = table.per_type[n.type.value];
    if (t.size() == 0) t = num::Tensor<Real>({graph.node_count(n.type), table.dim});
  }
  if (collect_stats) table.stats.resize(cfg, graph.schema().relation_count());
  for (std::size_t begin = 0; begin < nodes.size(); begin += chunk) {
    const std::size_t end = std::min(nodes.size(), begin + chunk);
    auto roots = nodes.subspan(begin, end - begin);
    auto tree = hin::build_computation_tree(graph, roots, cfg.depth(), fanouts, seed);
    num::Tape<Real> tape(false);
    ForwardOptions opts;
    opts.collect_stats = collect_stats;
    auto out = forward(tape, params, tree, opts);
    const auto v = out.embeddings.value().values();
    for (hin::NodeId n : roots) {
      const std::size_t r = out.row_of(n);
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * table.dim), table.dim,
                  table.per_type[n.type.value].data() + static_cast<std::size_t>(n.index) * table.dim);
    }
    if (collect_stats) table.stats.merge(out.stats);
  }
  return table;
}

}  // namespace disenhan::model
