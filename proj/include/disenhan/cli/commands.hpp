#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenhan/data/dataset.hpp"
#include "disenhan/data/synthetic.hpp"
#include "disenhan/eval/metrics.hpp"
#include "disenhan/io/config.hpp"
#include "disenhan/io/snapshot.hpp"
#include "disenhan/train/trainer.hpp"

namespace disenhan::cli {

namespace fs = std::filesystem;

inline constexpr const char* kOutRootEnv = "DISENHAN_OUT_ROOT";

/// Default output directory for a command: $DISENHAN_OUT_ROOT/<command>, or runs/<command>.
inline fs::path default_out_dir(const std::string& command) {
  const char* root = std::getenv(kOutRootEnv);
  return fs::path(root && *root ? root : "runs") / command;
}

/// Command-line values that replace fields of the loaded config.
struct Overrides {
  std::optional<std::string> manifest;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::size_t>> aspects;  // one value per layer, or one for all
  std::optional<std::size_t> iters;
  std::optional<std::size_t> layers;
  std::optional<std::size_t> dim;
  std::optional<std::vector<std::size_t>> fanout;
  std::optional<std::size_t> neg_ratio;
  std::optional<double> dropout;
  std::optional<double> lr;
  std::optional<std::size_t> patience;
  std::optional<std::size_t> topn;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;

  bool touches_model() const { return aspects || iters || layers || dim || dropout; }
};

inline void apply(io::RunConfig& r, const Overrides& o) {
  if (o.manifest) r.manifest = *o.manifest;
  if (o.seed) r.train.seed = *o.seed;
  auto& m = r.model;
  if (o.layers) {
    if (*o.layers == 0) throw ConfigError("--layers must be >= 1");
    const auto last = m.layers.empty() ? model::LayerShape{} : m.layers.back();
    m.layers.resize(*o.layers, last);
  }
  if (o.dim) {
    m.d_in = *o.dim;
    for (auto& l : m.layers) l.d_out = *o.dim;
  }
  if (o.aspects) {
    const auto& k = *o.aspects;
    if (k.empty()) throw ConfigError("--aspects needs at least one value");
    if (k.size() > 1 && !o.layers) m.layers.resize(k.size(), m.layers.empty() ? model::LayerShape{} : m.layers.back());
    if (k.size() > 1 && k.size() != m.layers.size()) {
      throw ConfigError("--aspects lists " + std::to_string(k.size()) + " values for " +
                        std::to_string(m.layers.size()) + " layers");
    }
    for (std::size_t l = 0; l < m.layers.size(); ++l) m.layers[l].aspects = k.size() == 1 ? k[0] : k[l];
  }
  if (o.iters) m.iterations = *o.iters;
  if (o.dropout) m.dropout = *o.dropout;
  auto& t = r.train;
  if (o.fanout) t.fanouts = *o.fanout;
  if (o.neg_ratio) t.negative_ratio = *o.neg_ratio;
  if (o.lr) t.learning_rate = *o.lr;
  if (o.patience) t.patience = *o.patience;
  if (o.topn) t.topn = *o.topn;
  if (o.epochs) t.max_epochs = *o.epochs;
  if (o.batch) t.batch_size = *o.batch;
}

struct Resolved {
  io::RunConfig run;
  bool model_specified = false;  // false: adopt the snapshot's model dimensions
};

/// Loads `config_path` when given, else `<fallback_dir>/config.json` when it
/// exists, then applies the overrides.
inline Resolved resolve(const std::optional<fs::path>& config_path, const Overrides& o,
                        const std::optional<fs::path>& fallback_dir = std::nullopt) {
  Resolved r;
  std::optional<fs::path> path = config_path;
  if (!path && fallback_dir && fs::exists(*fallback_dir / "config.json")) path = *fallback_dir / "config.json";
  if (path) {
    r.run = io::run_config_from_json(io::read_json_file(*path, "config"));
    r.model_specified = true;
  }
  apply(r.run, o);
  r.model_specified = r.model_specified || o.touches_model();
  return r;
}

/// Dataset after core filtering and the chronological split, with the graph
/// that training and evaluation see (train interactions plus context).
struct Prepared {
  data::Dataset dataset;
  hin::HinGraph graph;

  train::RecTask task() const { return {graph, dataset.log, dataset.user_type, dataset.item_type}; }
};

inline Prepared prepare(const io::RunConfig& r) {
  if (r.manifest.empty()) throw ConfigError("no dataset manifest given (use --manifest or a config file)");
  auto d = data::load_dataset(r.manifest);
  if (r.apply_core_filter) d = data::core_filter(std::move(d), d.core);
  d.log = data::chronological_split(std::move(d.log), r.split);
  auto g = data::training_graph(d);
  return {std::move(d), std::move(g)};
}

namespace seeds {
inline std::uint64_t init(std::uint64_t s) { return derive_seed(s, {0x1417}); }
inline std::uint64_t test_lists(std::uint64_t s) { return derive_seed(s, {0x7e57}); }
inline std::uint64_t embed(std::uint64_t s) { return derive_seed(s, {3}); }
}  // namespace seeds

inline void check_schema(const hin::Schema& snap, const hin::Schema& data) {
  if (io::to_json(snap) != io::to_json(data)) {
    throw ConfigError("snapshot schema does not match the dataset (node types, counts or relations differ)");
  }
}

inline model::ModelParams<double> load_params(const fs::path& snapshot, const Resolved& r, const Prepared& p) {
  auto params = io::load_snapshot<double>(snapshot, r.model_specified ? &r.run.model : nullptr);
  check_schema(params.schema(), p.dataset.schema);
  return params;
}

inline void write_report(const fs::path& out, const eval::MetricReport& rep) {
  io::write_json(out / "metrics.json", rep.to_json());
  io::write_text(out / "metrics.csv", eval::MetricReport::csv_header() + "\n" + rep.csv_row() + "\n");
}

inline std::string summary(const eval::MetricReport& rep) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << "Precision@" << rep.n << " " << rep.precision << "  Recall@" << rep.n << " "
    << rep.recall << "  NDCG@" << rep.n << " " << rep.ndcg << "  (" << rep.split << ", " << rep.per_user.size()
    << " users)";
  return s.str();
}

inline eval::MetricReport evaluate_split(model::ModelParams<double>& params, const Prepared& p,
                                         const io::RunConfig& r, data::Split split) {
  const auto& t = r.train;
  auto lists = eval::build_eval_lists(p.dataset.log, split, t.eval_negatives, seeds::test_lists(t.seed));
  auto rep = train::evaluate_model(params, p.task(), lists, t.fanout_policy(), seeds::embed(t.seed), t.topn, t.eval_chunk);
  rep.split = data::split_name(split);
  rep.negatives = t.eval_negatives;
  rep.seed = t.seed;
  return rep;
}

struct TrainOutcome {
  train::FitResult fit;
  eval::MetricReport test;
};

/// Trains, then writes config.json, train_log.jsonl, snapshot.json and the
/// test metrics of the best snapshot into `out`.
inline TrainOutcome cmd_train(const io::RunConfig& r, const fs::path& out, std::ostream& log) {
  r.model.validate();
  r.train.validate_config();
  io::write_json(out / "config.json", io::to_json(r));
  const auto p = prepare(r);
  model::ModelConfig mc = r.model;
  model::ModelParams<double> params(p.dataset.schema, mc);
  params.initialize(seeds::init(r.train.seed));

  std::ofstream epochs(out / "train_log.jsonl");
  train::FitHooks<double> hooks;
  hooks.on_epoch = [&](const train::EpochRecord& e) {
    const auto line = e.to_json().dump();
    epochs << line << '\n' << std::flush;
    log << line << '\n';
  };
  TrainOutcome o;
  o.fit = train::fit(params, p.task(), r.train, hooks);
  if (o.fit.skipped_positives) {
    log << "warning: skipped " << o.fit.skipped_positives
        << " positives of users who interacted with every item (no negatives to draw)\n";
  }
  io::save_snapshot(out / "snapshot.json", params);
  o.test = evaluate_split(params, p, r, data::Split::test);
  write_report(out, o.test);
  log << "best epoch " << o.fit.best_epoch << "; " << summary(o.test) << '\n';
  return o;
}

inline eval::MetricReport cmd_evaluate(const Resolved& r, const fs::path& snapshot, const fs::path& out,
                                       data::Split split, std::ostream& log) {
  const auto p = prepare(r.run);
  auto params = load_params(snapshot, r, p);
  io::RunConfig resolved = r.run;
  resolved.model = params.config();
  io::write_json(out / "config.json", io::to_json(resolved));
  const auto rep = evaluate_split(params, p, resolved, split);
  write_report(out, rep);
  log << summary(rep) << '\n';
  return rep;
}

/// Mean final-iteration aspect weights per layer and relation, averaged over
/// every node of the dataset used as a root.
struct AspectTable {
  struct Row {
    std::size_t layer = 0;
    std::string relation;
    std::size_t targets = 0;
    std::vector<double> weights;

    std::size_t major() const {
      return static_cast<std::size_t>(std::max_element(weights.begin(), weights.end()) - weights.begin());
    }
  };
  std::vector<Row> rows;

  std::string csv() const {
    std::size_t k_max = 0;
    for (const auto& r : rows) k_max = std::max(k_max, r.weights.size());
    std::ostringstream s;
    s << "layer,relation,targets";
    for (std::size_t k = 0; k < k_max; ++k) s << ",aspect_" << k;
    s << ",major_facet,major_weight\n";
    s << std::setprecision(10);
    for (const auto& r : rows) {
      s << r.layer << ',' << r.relation << ',' << r.targets;
      for (std::size_t k = 0; k < k_max; ++k) {
        s << ',';
        if (k < r.weights.size()) s << r.weights[k];
      }
      if (r.targets) {
        s << ',' << r.major() << ',' << r.weights[r.major()] << '\n';
      } else {
        s << ",,\n";
      }
    }
    return s.str();
  }
};

inline AspectTable aspect_table(model::ModelParams<double>& params, const hin::HinGraph& g, const hin::FanoutPolicy& f,
                                std::uint64_t seed) {
  std::vector<hin::NodeId> all;
  for (std::uint32_t t = 0; t < g.schema().node_type_count(); ++t)
    for (std::uint32_t i = 0; i < g.node_count({t}); ++i) all.push_back({{t}, i});
  const auto table = model::embed_nodes(params, g, all, f, seed, 2048, true);
  AspectTable out;
  for (std::size_t l = 0; l < params.config().depth(); ++l) {
    for (std::uint32_t r = 0; r < g.schema().relation_count(); ++r) {
      AspectTable::Row row;
      row.layer = l + 1;
      row.relation = g.schema().relation_key({r});
      row.targets = table.stats.counts[l][r];
      row.weights = table.stats.mean(l, r);
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

inline AspectTable cmd_inspect_aspects(const Resolved& r, const fs::path& snapshot, const fs::path& out,
                                       std::ostream& log) {
  const auto p = prepare(r.run);
  auto params = load_params(snapshot, r, p);
  io::RunConfig resolved = r.run;
  resolved.model = params.config();
  io::write_json(out / "config.json", io::to_json(resolved));
  const auto t = aspect_table(params, p.graph, resolved.train.fanout_policy(), seeds::embed(resolved.train.seed));
  io::write_text(out / "aspects.csv", t.csv());
  for (const auto& row : t.rows) {
    if (row.layer != 1 || !row.targets) continue;
    log << std::left << std::setw(40) << row.relation << " major facet " << row.major() << " (" << std::fixed
        << std::setprecision(3) << row.weights[row.major()] << ")\n";
  }
  return t;
}

/// Parses "type:id" (id as in the input files) or "type:*" into dataset nodes.
inline std::vector<hin::NodeId> parse_nodes(const data::Dataset& d, const std::vector<std::string>& specs) {
  std::vector<hin::NodeId> out;
  for (const auto& spec : specs) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw ConfigError("node '" + spec + "' must look like type:id or type:*");
    const auto type_name = spec.substr(0, colon), id = spec.substr(colon + 1);
    const auto type = d.schema.find_node_type(type_name);
    if (!type) throw ConfigError("unknown node '" + spec + "': no node type '" + type_name + "'");
    const auto& ids = d.original_ids.at(type->value);
    if (id == "*") {
      for (std::uint32_t i = 0; i < ids.size(); ++i) out.push_back({*type, i});
      continue;
    }
    std::uint32_t original = 0;
    if (!data::detail::parse_number(id, original)) throw ConfigError("node '" + spec + "' has a malformed id");
    const auto it = std::find(ids.begin(), ids.end(), original);
    if (it == ids.end()) {
      throw ConfigError("unknown node '" + spec + "': no " + type_name + " with id " + id +
                        " in the (filtered) dataset");
    }
    out.push_back({*type, static_cast<std::uint32_t>(it - ids.begin())});
  }
  return out;
}

inline std::vector<std::string> read_node_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("node list not found: " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    out.push_back(tab == std::string::npos ? line : line.substr(0, tab) + ":" + line.substr(tab + 1));
  }
  return out;
}

/// Writes embeddings.csv: id, type, then the d_out values (K aspect blocks).
inline std::size_t cmd_export_embeddings(const Resolved& r, const fs::path& snapshot, const fs::path& out,
                                         const std::vector<std::string>& node_specs, std::ostream& log) {
  const auto p = prepare(r.run);
  auto params = load_params(snapshot, r, p);
  io::RunConfig resolved = r.run;
  resolved.model = params.config();
  if (node_specs.empty()) throw ConfigError("no nodes to export (use --node or --nodes)");
  const auto nodes = parse_nodes(p.dataset, node_specs);
  io::write_json(out / "config.json", io::to_json(resolved));
  const auto table = model::embed_nodes(params, p.graph, nodes, resolved.train.fanout_policy(),
                                        seeds::embed(resolved.train.seed), resolved.train.eval_chunk);
  std::ostringstream s;
  s << "id,type";
  for (std::size_t j = 0; j < table.dim; ++j) s << ",e" << j;
  s << '\n' << std::setprecision(17);
  for (const auto& n : nodes) {
    s << p.dataset.original_ids[n.type.value][n.index] << ',' << p.dataset.schema.node_type_name(n.type);
    for (double v : table.of(n)) s << ',' << v;
    s << '\n';
  }
  io::write_text(out / "embeddings.csv", s.str());
  log << "wrote " << nodes.size() << " embeddings of width " << table.dim << " to " << (out / "embeddings.csv").string()
      << '\n';
  return nodes.size();
}

/// Generates a planted-aspect dataset into `out`: manifest, relation files,
/// truth.json and a config.json that trains on it.
inline fs::path cmd_synth(const data::SyntheticSpec& spec, std::uint64_t seed, const fs::path& out, std::ostream& log) {
  const auto syn = data::generate_synthetic(spec, seed);
  const auto manifest = data::save_dataset(syn.dataset, out);
  io::write_json(out / "truth.json", syn.truth.to_json());
  io::write_json(out / "spec.json", io::to_json(spec));
  io::RunConfig r;
  r.manifest = fs::absolute(manifest).string();
  r.train.seed = seed;
  io::write_json(out / "config.json", io::to_json(r));
  log << "wrote " << syn.dataset.log.records.size() << " interactions over " << spec.users << " users and "
      << spec.items << " items to " << manifest.string() << '\n';
  return manifest;
}

/// One axis of a sweep: "aspects=1,2,5".
struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

/// Parses "key=v1,v2;key2=v3". Keys: aspects, iters, layers, dim, fanout, neg-ratio, dropout, lr, seed.
inline std::vector<SweepAxis> parse_sweep(const std::string& spec) {
  static const std::vector<std::string> known{"aspects", "iters", "layers", "dim", "fanout",
                                              "neg-ratio", "dropout", "lr", "seed"};
  std::vector<SweepAxis> axes;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ';')) {
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ConfigError("sweep axis '" + part + "' must look like key=v1,v2");
    SweepAxis a{part.substr(0, eq), {}};
    if (std::find(known.begin(), known.end(), a.key) == known.end()) throw ConfigError("unknown sweep key '" + a.key + "'");
    std::stringstream vs(part.substr(eq + 1));
    std::string v;
    while (std::getline(vs, v, ',')) {
      if (!v.empty()) a.values.push_back(v);
    }
    if (a.values.empty()) throw ConfigError("sweep axis '" + a.key + "' has no values");
    axes.push_back(std::move(a));
  }
  if (axes.empty()) throw ConfigError("empty sweep specification");
  return axes;
}

inline void apply_sweep_value(Overrides& o, const std::string& key, const std::string& v) {
  auto to_size = [&](const std::string& s) {
    std::size_t x = 0;
    if (!data::detail::parse_number(s, x)) throw ConfigError("sweep value '" + s + "' for " + key + " is not an integer");
    return x;
  };
  auto to_double = [&](const std::string& s) {
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw ConfigError("sweep value '" + s + "' for " + key + " is not a number");
    }
  };
  if (key == "aspects") o.aspects = std::vector<std::size_t>{to_size(v)};
  else if (key == "iters") o.iters = to_size(v);
  else if (key == "layers") o.layers = to_size(v);
  else if (key == "dim") o.dim = to_size(v);
  else if (key == "fanout") o.fanout = std::vector<std::size_t>{to_size(v)};
  else if (key == "neg-ratio") o.neg_ratio = to_size(v);
  else if (key == "dropout") o.dropout = to_double(v);
  else if (key == "lr") o.lr = to_double(v);
  else if (key == "seed") o.seed = to_size(v);
}

/// Runs cmd_train for every combination of the sweep axes (last axis fastest),
/// each in its own subdirectory, appending one row per run to sweep.csv.
inline std::size_t run_sweep(const Resolved& base, const Overrides& base_overrides, const std::string& spec,
                             const fs::path& out, std::ostream& log) {
  const auto axes = parse_sweep(spec);
  std::vector<std::size_t> idx(axes.size(), 0);
  fs::create_directories(out);
  std::ofstream csv(out / "sweep.csv");
  csv << "run";
  for (const auto& a : axes) csv << ',' << a.key;
  csv << ',' << eval::MetricReport::csv_header() << ",best_epoch\n";
  std::size_t run = 0;
  while (true) {
    Overrides o = base_overrides;
    std::string label;
    for (std::size_t j = 0; j < axes.size(); ++j) {
      apply_sweep_value(o, axes[j].key, axes[j].values[idx[j]]);
      label += (j ? "_" : "") + axes[j].key + "-" + axes[j].values[idx[j]];
    }
    io::RunConfig r = base.run;
    apply(r, o);
    const auto dir = out / label;
    log << "== sweep run " << run << ": " << label << '\n';
    const auto res = cmd_train(r, dir, log);
    csv << run;
    for (std::size_t j = 0; j < axes.size(); ++j) csv << ',' << axes[j].values[idx[j]];
    csv << ',' << res.test.csv_row() << ',' << res.fit.best_epoch << '\n' << std::flush;
    ++run;
    std::size_t j = axes.size();
    while (j > 0 && ++idx[j - 1] == axes[j - 1].values.size()) idx[--j] = 0;
    if (j == 0) break;
  }
  return run;
}

}  // namespace disenhan::cli
