#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenhan/data/interactions.hpp"
#include "disenhan/error.hpp"
#include "disenhan/hin/graph.hpp"

namespace disenhan::data {

using EdgeList = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

/// A non-interaction relation. `edges` hold (source, target) pairs of the
/// forward relation; the inverse, when declared, receives the flipped pairs.
struct ContextRelation {
  hin::RelationId forward;
  std::optional<hin::RelationId> inverse;
  EdgeList edges;

  bool operator==(const ContextRelation&) const = default;
};

struct CoreThresholds {
  std::size_t min_user_interactions = 0;
  std::size_t min_item_interactions = 0;
  // relation key "src.edge.dst" -> minimum number of sources per target node
  std::map<std::string, std::size_t> min_degree;

  bool trivial() const {
    if (min_user_interactions || min_item_interactions) return false;
    for (const auto& [k, v] : min_degree)
      if (v) return false;
    return true;
  }
};

struct Dataset {
  hin::Schema schema;
  hin::NodeTypeId user_type;
  hin::NodeTypeId item_type;
  hin::RelationId interact;
  std::optional<hin::RelationId> interact_inverse;
  std::vector<ContextRelation> context;
  InteractionLog log;
  CoreThresholds core;
  // original_ids[type][compact index] = id as it appeared in the input files
  std::vector<std::vector<std::uint32_t>> original_ids;

  void reset_original_ids() {
    original_ids.assign(schema.node_type_count(), {});
    for (std::size_t t = 0; t < schema.node_type_count(); ++t) {
      auto& ids = original_ids[t];
      ids.resize(schema.node_count(hin::NodeTypeId{static_cast<std::uint32_t>(t)}));
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(i);
    }
  }
};

/// Graph over the context relations plus the given interactions (both directions
/// when the inverse interaction relation is declared).
inline hin::HinGraph build_hin(const Dataset& d, std::span<const Interaction> interactions) {
  hin::GraphBuilder b(d.schema);
  for (const auto& x : interactions) {
    b.add_edge(d.interact, x.user, x.item);
    if (d.interact_inverse) b.add_edge(*d.interact_inverse, x.item, x.user);
  }
  for (const auto& c : d.context) {
    for (auto [s, t] : c.edges) {
      b.add_edge(c.forward, s, t);
      if (c.inverse) b.add_edge(*c.inverse, t, s);
    }
  }
  return std::move(b).build();
}

inline hin::HinGraph full_graph(const Dataset& d) { return build_hin(d, d.log.records); }

/// Graph seen during training: context relations and train-split interactions only.
inline hin::HinGraph training_graph(const Dataset& d) {
  if (!d.log.is_split()) throw DataError("training graph requires a split interaction log");
  const auto train = d.log.of(Split::train);
  return build_hin(d, train);
}

namespace detail {

struct ParsedLine {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::optional<std::int64_t> timestamp;
};

template <class T>
bool parse_number(std::string_view s, T& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

inline std::vector<ParsedLine> read_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open relation file: " + path.string());
  std::vector<ParsedLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    ParsedLine p;
    bool ok = (fields.size() == 2 || fields.size() == 3) && parse_number(fields[0], p.src) && parse_number(fields[1], p.dst);
    if (ok && fields.size() == 3) {
      std::int64_t ts = 0;
      ok = parse_number(fields[2], ts);
      p.timestamp = ts;
    }
    if (!ok) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": malformed line (expected src<TAB>dst[<TAB>timestamp]): '" + line + "'");
    }
    out.push_back(p);
  }
  return out;
}

inline void check_range(const std::filesystem::path& file, std::size_t lineno, std::uint32_t id, const std::string& type,
                        std::size_t count) {
  if (id >= count) {
    throw DataError(file.string() + ":" + std::to_string(lineno) + ": id " + std::to_string(id) +
                    " out of range for node type '" + type + "' (count " + std::to_string(count) + ")");
  }
}

}  // namespace detail

/// Reads a JSON manifest:
///   node_types:   [{"name": "user", "count": 100}, ...]
///   interactions: {"file", "user_type", "item_type", "edge", "inverse"?}
///   relations:    [{"src", "edge", "dst", "file", "inverse"?}, ...]
///   core:         {"min_user_interactions"?, "min_item_interactions"?, "min_degree"?: {"src.edge.dst": n}}
/// Relative file paths resolve against the manifest's directory.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  namespace fs = std::filesystem;
  if (!fs::exists(manifest_path)) throw DataError("manifest not found: " + manifest_path.string());
  std::ifstream in(manifest_path);
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const std::string& f) { return fs::path(f).is_absolute() ? fs::path(f) : base / f; };

  Dataset d;
  try {
    for (const auto& t : m.at("node_types")) d.schema.add_node_type(t.at("name").get<std::string>(), t.at("count").get<std::size_t>());
    const auto& ix = m.at("interactions");
    d.user_type = d.schema.node_type(ix.at("user_type").get<std::string>());
    d.item_type = d.schema.node_type(ix.at("item_type").get<std::string>());
    d.interact = d.schema.add_relation(d.user_type, ix.value("edge", std::string("interact")), d.item_type);
    if (ix.contains("inverse")) d.interact_inverse = d.schema.add_relation(d.item_type, ix.at("inverse").get<std::string>(), d.user_type);

    std::vector<fs::path> files;
    for (const auto& r : m.value("relations", nlohmann::json::array())) {
      ContextRelation c;
      const auto src = d.schema.node_type(r.at("src").get<std::string>());
      const auto dst = d.schema.node_type(r.at("dst").get<std::string>());
      c.forward = d.schema.add_relation(src, r.at("edge").get<std::string>(), dst);
      if (r.contains("inverse")) c.inverse = d.schema.add_relation(dst, r.at("inverse").get<std::string>(), src);
      d.context.push_back(std::move(c));
      files.push_back(resolve(r.at("file").get<std::string>()));
    }

    if (m.contains("core")) {
      const auto& c = m.at("core");
      d.core.min_user_interactions = c.value("min_user_interactions", std::size_t{0});
      d.core.min_item_interactions = c.value("min_item_interactions", std::size_t{0});
      if (c.contains("min_degree")) d.core.min_degree = c.at("min_degree").get<std::map<std::string, std::size_t>>();
    }

    d.log.users = d.schema.node_count(d.user_type);
    d.log.items = d.schema.node_count(d.item_type);
    const fs::path ix_file = resolve(ix.at("file").get<std::string>());
    const auto rows = detail::read_tsv(ix_file);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      detail::check_range(ix_file, i + 1, rows[i].src, d.schema.node_type_name(d.user_type), d.log.users);
      detail::check_range(ix_file, i + 1, rows[i].dst, d.schema.node_type_name(d.item_type), d.log.items);
      d.log.records.push_back({rows[i].src, rows[i].dst, rows[i].timestamp.value_or(static_cast<std::int64_t>(i))});
    }
    for (std::size_t ci = 0; ci < d.context.size(); ++ci) {
      auto& c = d.context[ci];
      const auto& rel = d.schema.relation(c.forward);
      const auto parsed = detail::read_tsv(files[ci]);
      for (std::size_t li = 0; li < parsed.size(); ++li) {
        const auto& p = parsed[li];
        detail::check_range(files[ci], li + 1, p.src, d.schema.node_type_name(rel.src_type), d.schema.node_count(rel.src_type));
        detail::check_range(files[ci], li + 1, p.dst, d.schema.node_type_name(rel.dst_type), d.schema.node_count(rel.dst_type));
        c.edges.emplace_back(p.src, p.dst);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + manifest_path.string() + ": " + e.what());
  } catch (const GraphError& e) {
    throw DataError("manifest " + manifest_path.string() + ": " + e.what());
  }
  d.reset_original_ids();
  return d;
}

/// Per-type survival flags after iterated threshold filtering.
struct CoreMask {
  std::vector<std::vector<std::uint8_t>> keep;
  std::size_t rounds = 0;

  std::size_t survivors(hin::NodeTypeId t) const {
    return static_cast<std::size_t>(std::count(keep[t.value].begin(), keep[t.value].end(), std::uint8_t{1}));
  }
};

/// Repeatedly drops users/items below their interaction thresholds and nodes
/// below any per-relation degree threshold, removing incident edges, until
/// nothing changes.
inline CoreMask core_filter_mask(const Dataset& d, const CoreThresholds& th) {
  const hin::Schema& s = d.schema;
  CoreMask mask;
  mask.keep.resize(s.node_type_count());
  for (std::size_t t = 0; t < s.node_type_count(); ++t)
    mask.keep[t].assign(s.node_count(hin::NodeTypeId{static_cast<std::uint32_t>(t)}), 1);

  struct DegreeRule {
    hin::RelationId rel;
    std::size_t min;
  };
  std::vector<DegreeRule> rules;
  for (const auto& [key, min] : th.min_degree) {
    if (min == 0) continue;
    bool found = false;
    for (std::size_t r = 0; r < s.relation_count(); ++r) {
      if (s.relation_key(hin::RelationId{static_cast<std::uint32_t>(r)}) == key) {
        rules.push_back({hin::RelationId{static_cast<std::uint32_t>(r)}, min});
        found = true;
      }
    }
    if (!found) throw ConfigError("core filter names an undeclared relation: " + key);
  }

  auto alive = [&](hin::NodeTypeId t, std::uint32_t i) { return mask.keep[t.value][i] != 0; };
  const auto& U = d.user_type;
  const auto& I = d.item_type;
  bool changed = true;
  while (changed) {
    changed = false;
    ++mask.rounds;
    std::vector<std::size_t> user_n(s.node_count(U), 0), item_n(s.node_count(I), 0);
    for (const auto& x : d.log.records) {
      if (!alive(U, x.user) || !alive(I, x.item)) continue;
      ++user_n[x.user];
      ++item_n[x.item];
    }
    std::vector<std::vector<std::uint8_t>> drop(mask.keep.size());
    for (std::size_t t = 0; t < drop.size(); ++t) drop[t].assign(mask.keep[t].size(), 0);
    for (std::uint32_t u = 0; u < user_n.size(); ++u)
      if (alive(U, u) && user_n[u] < th.min_user_interactions) drop[U.value][u] = 1;
    for (std::uint32_t i = 0; i < item_n.size(); ++i)
      if (alive(I, i) && item_n[i] < th.min_item_interactions) drop[I.value][i] = 1;

    for (const auto& rule : rules) {
      const auto& m = s.relation(rule.rel);
      std::vector<std::size_t> deg(s.node_count(m.dst_type), 0);
      auto count_edge = [&](std::uint32_t src, std::uint32_t dst) {
        if (alive(m.src_type, src) && alive(m.dst_type, dst)) ++deg[dst];
      };
      if (rule.rel == d.interact) {
        for (const auto& x : d.log.records) count_edge(x.user, x.item);
      } else if (d.interact_inverse && rule.rel == *d.interact_inverse) {
        for (const auto& x : d.log.records) count_edge(x.item, x.user);
      }
      for (const auto& c : d.context) {
        if (c.forward == rule.rel)
          for (auto [a, b] : c.edges) count_edge(a, b);
        if (c.inverse && *c.inverse == rule.rel)
          for (auto [a, b] : c.edges) count_edge(b, a);
      }
      for (std::uint32_t v = 0; v < deg.size(); ++v)
        if (alive(m.dst_type, v) && deg[v] < rule.min) drop[m.dst_type.value][v] = 1;
    }

    for (std::size_t t = 0; t < drop.size(); ++t)
      for (std::size_t v = 0; v < drop[t].size(); ++v)
        if (drop[t][v]) {
          mask.keep[t][v] = 0;
          changed = true;
        }
  }
  return mask;
}

/// Applies core_filter_mask and compacts ids. Rejects a result where the user
/// or item type, or any type carrying a degree threshold, becomes empty.
inline Dataset core_filter(Dataset d, const CoreThresholds& th) {
  if (th.trivial()) return d;
  const CoreMask mask = core_filter_mask(d, th);
  std::vector<hin::NodeTypeId> required{d.user_type, d.item_type};
  for (const auto& [key, min] : th.min_degree) {
    if (!min) continue;
    for (std::size_t r = 0; r < d.schema.relation_count(); ++r)
      if (d.schema.relation_key(hin::RelationId{static_cast<std::uint32_t>(r)}) == key)
        required.push_back(d.schema.relation(hin::RelationId{static_cast<std::uint32_t>(r)}).dst_type);
  }
  for (hin::NodeTypeId t : required) {
    if (mask.survivors(t) == 0) {
      std::string counts;
      for (std::size_t k = 0; k < d.schema.node_type_count(); ++k) {
        const hin::NodeTypeId tk{static_cast<std::uint32_t>(k)};
        counts += (k ? ", " : "") + d.schema.node_type_name(tk) + " " + std::to_string(mask.survivors(tk)) + "/" +
                  std::to_string(d.schema.node_count(tk));
      }
      throw DataError("core filter removed every '" + d.schema.node_type_name(t) + "' node after " +
                      std::to_string(mask.rounds) + " rounds (survivors: " + counts + ")");
    }
  }

  std::vector<std::vector<std::int64_t>> remap(mask.keep.size());
  for (std::size_t t = 0; t < mask.keep.size(); ++t) {
    remap[t].assign(mask.keep[t].size(), -1);
    std::vector<std::uint32_t> ids;
    for (std::size_t v = 0; v < mask.keep[t].size(); ++v) {
      if (!mask.keep[t][v]) continue;
      remap[t][v] = static_cast<std::int64_t>(ids.size());
      ids.push_back(d.original_ids.empty() ? static_cast<std::uint32_t>(v) : d.original_ids[t][v]);
    }
    d.schema.set_node_count(hin::NodeTypeId{static_cast<std::uint32_t>(t)}, ids.size());
    if (d.original_ids.size() == mask.keep.size()) d.original_ids[t] = std::move(ids);
  }
  if (d.original_ids.size() != mask.keep.size()) {
    d.reset_original_ids();
  }

  std::vector<Interaction> kept;
  std::vector<Split> kept_split;
  for (std::size_t i = 0; i < d.log.records.size(); ++i) {
    const auto& x = d.log.records[i];
    const auto u = remap[d.user_type.value][x.user], it = remap[d.item_type.value][x.item];
    if (u < 0 || it < 0) continue;
    kept.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(it), x.timestamp});
    if (d.log.is_split()) kept_split.push_back(d.log.split[i]);
  }
  d.log.records = std::move(kept);
  d.log.split = std::move(kept_split);
  d.log.users = d.schema.node_count(d.user_type);
  d.log.items = d.schema.node_count(d.item_type);
  for (auto& c : d.context) {
    const auto& m = d.schema.relation(c.forward);
    EdgeList e;
    for (auto [a, b] : c.edges) {
      const auto na = remap[m.src_type.value][a], nb = remap[m.dst_type.value][b];
      if (na >= 0 && nb >= 0) e.emplace_back(static_cast<std::uint32_t>(na), static_cast<std::uint32_t>(nb));
    }
    c.edges = std::move(e);
  }
  return d;
}

}  // namespace disenhan::data

namespace disenhan::data {

/// Writes a manifest plus one TSV per relation into `dir`, in the format
/// load_dataset reads. Returns the manifest path.
inline std::filesystem::path save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto& s = d.schema;
  nlohmann::ordered_json m;
  m["node_types"] = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < s.node_type_count(); ++t) {
    const hin::NodeTypeId id{static_cast<std::uint32_t>(t)};
    m["node_types"].push_back({{"name", s.node_type_name(id)}, {"count", s.node_count(id)}});
  }
  const auto& ui = s.relation(d.interact);
  nlohmann::ordered_json ix{{"file", "interactions.tsv"},
                            {"user_type", s.node_type_name(d.user_type)},
                            {"item_type", s.node_type_name(d.item_type)},
                            {"edge", s.edge_name(ui.edge_type)}};
  if (d.interact_inverse) ix["inverse"] = s.edge_name(s.relation(*d.interact_inverse).edge_type);
  m["interactions"] = ix;
  {
    std::ofstream out(dir / "interactions.tsv");
    for (const auto& x : d.log.records) out << x.user << '\t' << x.item << '\t' << x.timestamp << '\n';
  }
  m["relations"] = nlohmann::ordered_json::array();
  for (const auto& c : d.context) {
    const auto& r = s.relation(c.forward);
    const std::string file = s.relation_key(c.forward) + ".tsv";
    nlohmann::ordered_json j{{"src", s.node_type_name(r.src_type)},
                             {"edge", s.edge_name(r.edge_type)},
                             {"dst", s.node_type_name(r.dst_type)},
                             {"file", file}};
    if (c.inverse) j["inverse"] = s.edge_name(s.relation(*c.inverse).edge_type);
    m["relations"].push_back(j);
    std::ofstream out(dir / file);
    for (auto [a, b] : c.edges) out << a << '\t' << b << '\n';
  }
  nlohmann::ordered_json core{{"min_user_interactions", d.core.min_user_interactions},
                              {"min_item_interactions", d.core.min_item_interactions}};
  if (!d.core.min_degree.empty()) core["min_degree"] = d.core.min_degree;
  m["core"] = core;
  const fs::path path = dir / "manifest.json";
  std::ofstream(path) << m.dump(2) << '\n';
  return path;
}

}  // namespace disenhan::data
