#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "disenhan/hin/graph.hpp"
#include "disenhan/numcore/tensor.hpp"
#include "disenhan/rng.hpp"

namespace disenhan::hin {

inline constexpr std::uint32_t kPadding = std::numeric_limits<std::uint32_t>::max();

/// Fixed-length neighbor slots for one (target, relation). Padded slots hold
/// kPadding and are masked out.
struct SampledNeighborhood {
  RelationId relation;
  std::vector<std::uint32_t> neighbor_ids;
  num::Mask mask;

  std::size_t fanout() const noexcept { return neighbor_ids.size(); }
  std::size_t real_count() const noexcept {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }
  bool empty() const noexcept { return real_count() == 0; }
};

/// Draws at most `fanout` distinct neighbors of `target` under `rel`, uniformly
/// without replacement. The draw depends only on (seed, target, rel).
inline SampledNeighborhood sample_neighbors(const HinGraph& g, NodeId target, RelationId rel, std::size_t fanout,
                                            std::uint64_t seed) {
  if (fanout == 0) throw GraphError("fan-out must be positive");
  const auto all = g.neighbors(target, rel);
  SampledNeighborhood out;
  out.relation = rel;
  out.neighbor_ids.assign(fanout, kPadding);
  out.mask.assign(fanout, 0);
  if (all.size() <= fanout) {
    std::copy(all.begin(), all.end(), out.neighbor_ids.begin());
    std::fill_n(out.mask.begin(), all.size(), std::uint8_t{1});
    return out;
  }
  Rng rng(derive_seed(seed, {node_key(target), rel.value}));
  std::vector<std::uint32_t> pool(all.begin(), all.end());
  for (std::size_t i = 0; i < fanout; ++i) {
    const std::size_t j = i + uniform_below(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(fanout));
  std::copy_n(pool.begin(), fanout, out.neighbor_ids.begin());
  std::fill(out.mask.begin(), out.mask.end(), std::uint8_t{1});
  return out;
}

/// Fan-out per depth with optional per-relation overrides.
struct FanoutPolicy {
  std::vector<std::size_t> per_depth;            // index 0 = neighbors of the roots
  std::map<std::uint32_t, std::size_t> per_relation;  // keyed by RelationId value
  std::size_t fallback = 10;

  std::size_t fanout(std::size_t depth, RelationId rel) const {
    if (auto it = per_relation.find(rel.value); it != per_relation.end()) return it->second;
    if (depth < per_depth.size()) return per_depth[depth];
    return per_depth.empty() ? fallback : per_depth.back();
  }
};

/// L-hop sampled receptive field of a set of targets. levels[0] holds the
/// distinct roots; levels[d] holds the distinct sampled sources of levels[d-1].
/// A node's neighborhoods are sampled once (at its shallowest depth) and shared.
struct ComputationTree {
  std::vector<NodeId> roots;
  std::vector<std::vector<NodeId>> levels;
  std::unordered_map<NodeId, std::vector<SampledNeighborhood>> neighborhoods;

  std::size_t depth() const noexcept { return levels.empty() ? 0 : levels.size() - 1; }

  const std::vector<SampledNeighborhood>& neighborhoods_of(NodeId n) const {
    auto it = neighborhoods.find(n);
    if (it == neighborhoods.end()) throw GraphError("node has no sampled neighborhood in this tree");
    return it->second;
  }

  /// Distinct nodes of depths 0..d, shallowest first.
  std::vector<NodeId> nodes_up_to(std::size_t d) const {
    std::vector<NodeId> out;
    std::unordered_set<NodeId> seen;
    for (std::size_t l = 0; l <= d && l < levels.size(); ++l)
      for (NodeId n : levels[l])
        if (seen.insert(n).second) out.push_back(n);
    return out;
  }
};

inline ComputationTree build_computation_tree(const HinGraph& g, std::span<const NodeId> targets, std::size_t depth,
                                              const FanoutPolicy& fanouts, std::uint64_t seed) {
  if (depth == 0) throw GraphError("computation tree depth must be >= 1");
  ComputationTree tree;
  tree.roots.assign(targets.begin(), targets.end());
  tree.levels.resize(depth + 1);
  {
    std::unordered_set<NodeId> seen;
    for (NodeId t : targets)
      if (seen.insert(t).second) tree.levels[0].push_back(t);
  }
  for (std::size_t d = 0; d < depth; ++d) {
    std::unordered_set<NodeId> next_seen;
    for (NodeId n : tree.levels[d]) {
      auto [it, inserted] = tree.neighborhoods.try_emplace(n);
      if (inserted) {
        for (RelationId rel : g.schema().relations_into(n.type))
          it->second.push_back(sample_neighbors(g, n, rel, fanouts.fanout(d, rel), seed));
      }
      for (const auto& hood : it->second) {
        const NodeTypeId src_type = g.schema().relation(hood.relation).src_type;
        for (std::size_t s = 0; s < hood.fanout(); ++s) {
          if (!hood.mask[s]) continue;
          NodeId m{src_type, hood.neighbor_ids[s]};
          if (next_seen.insert(m).second) tree.levels[d + 1].push_back(m);
        }
      }
    }
  }
  return tree;
}

}  // namespace disenhan::hin
