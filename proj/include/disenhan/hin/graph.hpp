#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "disenhan/error.hpp"

namespace disenhan::hin {

struct NodeTypeId {
  std::uint32_t value = 0;
  auto operator<=>(const NodeTypeId&) const = default;
};

struct EdgeTypeId {
  std::uint32_t value = 0;
  auto operator<=>(const EdgeTypeId&) const = default;
};

struct RelationId {
  std::uint32_t value = 0;
  auto operator<=>(const RelationId&) const = default;
};

/// A node is identified by its type and its index within that type.
struct NodeId {
  NodeTypeId type;
  std::uint32_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

inline std::uint64_t node_key(NodeId n) {
  return (static_cast<std::uint64_t>(n.type.value) << 32) | n.index;
}

/// Typed triple <source type, edge type, target type>. An edge (s, t) stored
/// under a relation makes s a source neighbor of target t.
struct MetaRelation {
  NodeTypeId src_type;
  EdgeTypeId edge_type;
  NodeTypeId dst_type;
  auto operator<=>(const MetaRelation&) const = default;
};

/// Node types with their counts, edge type names and declared meta relations.
class Schema {
 public:
  NodeTypeId add_node_type(std::string name, std::size_t count) {
    if (find_node_type(name)) throw GraphError("duplicate node type: " + name);
    node_types_.push_back({std::move(name), count});
    return NodeTypeId{static_cast<std::uint32_t>(node_types_.size() - 1)};
  }

  RelationId add_relation(NodeTypeId src, std::string_view edge_name, NodeTypeId dst) {
    check_type(src);
    check_type(dst);
    EdgeTypeId edge = intern_edge(edge_name);
    MetaRelation rel{src, edge, dst};
    if (find_relation(rel)) throw GraphError("duplicate meta relation " + describe(rel));
    relations_.push_back(rel);
    return RelationId{static_cast<std::uint32_t>(relations_.size() - 1)};
  }

  RelationId add_relation(std::string_view src, std::string_view edge_name, std::string_view dst) {
    return add_relation(node_type(src), edge_name, node_type(dst));
  }

  std::size_t node_type_count() const noexcept { return node_types_.size(); }
  std::size_t edge_type_count() const noexcept { return edge_names_.size(); }
  std::size_t relation_count() const noexcept { return relations_.size(); }

  const std::string& node_type_name(NodeTypeId t) const { return node_types_.at(t.value).name; }
  std::size_t node_count(NodeTypeId t) const { return node_types_.at(t.value).count; }
  const std::string& edge_name(EdgeTypeId e) const { return edge_names_.at(e.value); }
  const MetaRelation& relation(RelationId r) const { return relations_.at(r.value); }

  std::optional<NodeTypeId> find_node_type(std::string_view name) const {
    for (std::size_t i = 0; i < node_types_.size(); ++i)
      if (node_types_[i].name == name) return NodeTypeId{static_cast<std::uint32_t>(i)};
    return std::nullopt;
  }

  NodeTypeId node_type(std::string_view name) const {
    if (auto t = find_node_type(name)) return *t;
    throw GraphError("unknown node type: " + std::string(name));
  }

  std::optional<RelationId> find_relation(const MetaRelation& rel) const {
    for (std::size_t i = 0; i < relations_.size(); ++i)
      if (relations_[i] == rel) return RelationId{static_cast<std::uint32_t>(i)};
    return std::nullopt;
  }

  std::optional<RelationId> find_relation(std::string_view src, std::string_view edge,
                                          std::string_view dst) const {
    auto s = find_node_type(src);
    auto d = find_node_type(dst);
    if (!s || !d) return std::nullopt;
    for (std::size_t i = 0; i < relations_.size(); ++i) {
      const auto& r = relations_[i];
      if (r.src_type == *s && r.dst_type == *d && edge_names_[r.edge_type.value] == edge)
        return RelationId{static_cast<std::uint32_t>(i)};
    }
    return std::nullopt;
  }

  /// Looks a relation up by edge name; the name must identify exactly one relation.
  RelationId relation_by_edge(std::string_view edge) const {
    std::optional<RelationId> hit;
    for (std::size_t i = 0; i < relations_.size(); ++i) {
      if (edge_names_[relations_[i].edge_type.value] != edge) continue;
      if (hit) throw GraphError("edge name '" + std::string(edge) + "' names several relations");
      hit = RelationId{static_cast<std::uint32_t>(i)};
    }
    if (!hit) throw GraphError("relation not declared: " + std::string(edge));
    return *hit;
  }

  /// Relations whose targets have type `dst`, in declaration order.
  std::vector<RelationId> relations_into(NodeTypeId dst) const {
    std::vector<RelationId> out;
    for (std::size_t i = 0; i < relations_.size(); ++i)
      if (relations_[i].dst_type == dst) out.push_back(RelationId{static_cast<std::uint32_t>(i)});
    return out;
  }

  std::string describe(const MetaRelation& r) const {
    return "<" + node_type_name(r.src_type) + "," + edge_name(r.edge_type) + "," + node_type_name(r.dst_type) + ">";
  }
  std::string describe(RelationId r) const { return describe(relation(r)); }

  /// Stable identifier used in parameter names and reports: "src.edge.dst".
  std::string relation_key(RelationId r) const {
    const auto& m = relation(r);
    return node_type_name(m.src_type) + "." + edge_name(m.edge_type) + "." + node_type_name(m.dst_type);
  }

  void set_node_count(NodeTypeId t, std::size_t count) { node_types_.at(t.value).count = count; }

  friend bool operator==(const Schema&, const Schema&) = default;

 private:
  struct NodeType {
    std::string name;
    std::size_t count = 0;
    friend bool operator==(const NodeType&, const NodeType&) = default;
  };

  void check_type(NodeTypeId t) const {
    if (t.value >= node_types_.size()) throw GraphError("unknown node type id " + std::to_string(t.value));
  }

  EdgeTypeId intern_edge(std::string_view name) {
    for (std::size_t i = 0; i < edge_names_.size(); ++i)
      if (edge_names_[i] == name) return EdgeTypeId{static_cast<std::uint32_t>(i)};
    edge_names_.emplace_back(name);
    return EdgeTypeId{static_cast<std::uint32_t>(edge_names_.size() - 1)};
  }

  std::vector<NodeType> node_types_;
  std::vector<std::string> edge_names_;
  std::vector<MetaRelation> relations_;
};

/// Immutable heterogeneous graph. Adjacency is stored per relation in CSR form
/// keyed by target node; neighbor lists are sorted and duplicate-free.
class HinGraph {
 public:
  const Schema& schema() const noexcept { return schema_; }
  std::size_t node_count(NodeTypeId t) const { return schema_.node_count(t); }

  std::span<const std::uint32_t> neighbors(NodeId target, RelationId rel) const {
    const Adjacency& a = adjacency(target, rel);
    return std::span<const std::uint32_t>(a.sources).subspan(a.offsets[target.index],
                                                             a.offsets[target.index + 1] - a.offsets[target.index]);
  }

  std::span<const std::uint32_t> neighbors(NodeId target, const MetaRelation& rel) const {
    auto id = schema_.find_relation(rel);
    if (!id) throw GraphError("relation not declared: " + describe_any(rel));
    return neighbors(target, *id);
  }

  std::size_t degree(NodeId target, RelationId rel) const { return neighbors(target, rel).size(); }

  std::size_t edge_count(RelationId rel) const { return adj_.at(rel.value).sources.size(); }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& a : adj_) n += a.sources.size();
    return n;
  }

  /// (source index, target index) pairs of a relation, ordered by target then source.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges(RelationId rel) const {
    const Adjacency& a = adj_.at(rel.value);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    out.reserve(a.sources.size());
    for (std::size_t t = 0; t + 1 < a.offsets.size(); ++t)
      for (std::size_t i = a.offsets[t]; i < a.offsets[t + 1]; ++i)
        out.emplace_back(a.sources[i], static_cast<std::uint32_t>(t));
    return out;
  }

  friend bool operator==(const HinGraph&, const HinGraph&) = default;

 private:
  friend class GraphBuilder;

  struct Adjacency {
    std::vector<std::size_t> offsets;
    std::vector<std::uint32_t> sources;
    friend bool operator==(const Adjacency&, const Adjacency&) = default;
  };

  const Adjacency& adjacency(NodeId target, RelationId rel) const {
    if (rel.value >= adj_.size()) throw GraphError("unknown relation id " + std::to_string(rel.value));
    const MetaRelation& m = schema_.relation(rel);
    if (m.dst_type != target.type) {
      throw GraphError("relation " + schema_.describe(rel) + " does not target node type " +
                       schema_.node_type_name(target.type));
    }
    if (target.index >= schema_.node_count(target.type)) {
      throw GraphError("node " + std::to_string(target.index) + " out of range for type " +
                       schema_.node_type_name(target.type));
    }
    return adj_[rel.value];
  }

  std::string describe_any(const MetaRelation& r) const {
    auto name = [&](NodeTypeId t) {
      return t.value < schema_.node_type_count() ? schema_.node_type_name(t) : "#" + std::to_string(t.value);
    };
    const std::string edge =
        r.edge_type.value < schema_.edge_type_count() ? schema_.edge_name(r.edge_type) : "#" + std::to_string(r.edge_type.value);
    return "<" + name(r.src_type) + "," + edge + "," + name(r.dst_type) + ">";
  }

  Schema schema_;
  std::vector<Adjacency> adj_;
};

/// Collects typed edges and produces an immutable HinGraph.
class GraphBuilder {
 public:
  explicit GraphBuilder(Schema schema) : schema_(std::move(schema)), pending_(schema_.relation_count()) {}

  const Schema& schema() const noexcept { return schema_; }

  void add_edge(RelationId rel, std::uint32_t src, std::uint32_t dst) {
    if (rel.value >= pending_.size()) throw GraphError("unknown relation id " + std::to_string(rel.value));
    const MetaRelation& m = schema_.relation(rel);
    if (src >= schema_.node_count(m.src_type) || dst >= schema_.node_count(m.dst_type)) {
      throw GraphError("dangling edge (" + std::to_string(src) + ", " + std::to_string(dst) + ") in " +
                       schema_.describe(rel) + ": counts are " + std::to_string(schema_.node_count(m.src_type)) +
                       " and " + std::to_string(schema_.node_count(m.dst_type)));
    }
    pending_[rel.value].emplace_back(src, dst);
  }

  /// Typed form: endpoint types must match the relation's declared types.
  void add_edge(RelationId rel, NodeId src, NodeId dst) {
    const MetaRelation& m = schema_.relation(rel);
    if (src.type != m.src_type || dst.type != m.dst_type) {
      throw GraphError("edge (" + schema_.node_type_name(src.type) + ":" + std::to_string(src.index) + ", " +
                       schema_.node_type_name(dst.type) + ":" + std::to_string(dst.index) +
                       ") does not match relation " + schema_.describe(rel));
    }
    add_edge(rel, src.index, dst.index);
  }

  HinGraph build() && {
    if (schema_.node_type_count() + schema_.edge_type_count() <= 2) {
      throw GraphError("not heterogeneous: " + std::to_string(schema_.node_type_count()) + " node types + " +
                       std::to_string(schema_.edge_type_count()) + " edge types <= 2");
    }
    HinGraph g;
    g.adj_.resize(schema_.relation_count());
    for (std::size_t r = 0; r < pending_.size(); ++r) {
      auto& edges = pending_[r];
      std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
      });
      edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
      const std::size_t n_dst = schema_.node_count(schema_.relation(RelationId{static_cast<std::uint32_t>(r)}).dst_type);
      auto& a = g.adj_[r];
      a.offsets.assign(n_dst + 1, 0);
      a.sources.reserve(edges.size());
      for (const auto& [s, t] : edges) {
        ++a.offsets[t + 1];
        a.sources.push_back(s);
      }
      for (std::size_t i = 0; i < n_dst; ++i) a.offsets[i + 1] += a.offsets[i];
    }
    g.schema_ = std::move(schema_);
    return g;
  }

 private:
  Schema schema_;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> pending_;
};

struct RelationEdges {
  RelationId relation;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // (source index, target index)
};

inline HinGraph build_graph(Schema schema, const std::vector<RelationEdges>& edge_lists) {
  GraphBuilder b(std::move(schema));
  for (const auto& list : edge_lists)
    for (const auto& [s, t] : list.edges) b.add_edge(list.relation, s, t);
  return std::move(b).build();
}

}  // namespace disenhan::hin

template <>
struct std::hash<disenhan::hin::NodeId> {
  std::size_t operator()(const disenhan::hin::NodeId& n) const noexcept {
    return std::hash<std::uint64_t>{}(disenhan::hin::node_key(n));
  }
};
