#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "disenhan/cli/commands.hpp"

namespace fs = std::filesystem;
using namespace disenhan;

namespace {

std::vector<std::size_t> parse_list(const std::string& flag, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t v = 0;
    if (!data::detail::parse_number(part, v)) throw ConfigError(flag + ": '" + text + "' is not a comma-separated list of integers");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(flag + " needs at least one value");
  return out;
}

struct Flags {
  std::string config;
  std::string manifest;
  std::string out;
  std::string snapshot;
  std::string aspects;
  std::string fanout;
  std::string sweep;
  std::string split = "test";
  std::vector<std::string> nodes;
  std::string nodes_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters, layers, dim, neg_ratio, patience, topn, epochs, batch;
  std::optional<double> dropout, lr;
  data::SyntheticSpec synth;
};

void add_run_flags(CLI::App* cmd, Flags& f, bool training) {
  cmd->add_option("--config", f.config, "Run config JSON (defaults to config.json next to --snapshot)");
  cmd->add_option("--manifest", f.manifest, "Dataset manifest JSON");
  cmd->add_option("--out", f.out, "Output directory (default: $DISENHAN_OUT_ROOT/<command>)");
  cmd->add_option("--seed", f.seed, "Seed for initialization, sampling and evaluation");
  cmd->add_option("--aspects", f.aspects, "Aspects per layer, e.g. 5 or 5,3");
  cmd->add_option("--iters", f.iters, "Routing iterations per layer");
  cmd->add_option("--layers", f.layers, "Number of propagation layers");
  cmd->add_option("--dim", f.dim, "Embedding width (d_in and every d_out)");
  cmd->add_option("--fanout", f.fanout, "Neighbors sampled per relation, per depth, e.g. 10 or 10,5");
  cmd->add_option("--topn", f.topn, "Ranking cutoff N");
  if (!training) return;
  cmd->add_option("--neg-ratio", f.neg_ratio, "Negatives per positive");
  cmd->add_option("--dropout", f.dropout, "Dropout rate on aggregated messages");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--patience", f.patience, "Early-stopping patience in epochs");
  cmd->add_option("--epochs", f.epochs, "Maximum epochs");
  cmd->add_option("--batch", f.batch, "Pairs per batch");
  cmd->add_option("--sweep", f.sweep, "Sweep spec, e.g. 'aspects=1,2,5;iters=1,3'");
}

cli::Overrides overrides(const Flags& f) {
  cli::Overrides o;
  if (!f.manifest.empty()) o.manifest = f.manifest;
  o.seed = f.seed;
  if (!f.aspects.empty()) o.aspects = parse_list("--aspects", f.aspects);
  if (!f.fanout.empty()) o.fanout = parse_list("--fanout", f.fanout);
  o.iters = f.iters;
  o.layers = f.layers;
  o.dim = f.dim;
  o.neg_ratio = f.neg_ratio;
  o.dropout = f.dropout;
  o.lr = f.lr;
  o.patience = f.patience;
  o.topn = f.topn;
  o.epochs = f.epochs;
  o.batch = f.batch;
  return o;
}

cli::Resolved resolve(const Flags& f) {
  std::optional<fs::path> config;
  if (!f.config.empty()) config = f.config;
  std::optional<fs::path> fallback;
  if (!f.snapshot.empty()) fallback = fs::path(f.snapshot).parent_path();
  return cli::resolve(config, overrides(f), fallback);
}

fs::path out_dir(const Flags& f, const std::string& command) {
  return f.out.empty() ? cli::default_out_dir(command) : fs::path(f.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled heterogeneous graph attention recommender"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "Train a model and report test metrics of the best snapshot");
  add_run_flags(train, f, true);

  auto* evaluate = app.add_subcommand("evaluate", "Score a snapshot under the sampled-negatives protocol");
  add_run_flags(evaluate, f, false);
  evaluate->add_option("--snapshot", f.snapshot, "Snapshot JSON")->required();
  evaluate->add_option("--split", f.split, "valid or test");

  auto* inspect = app.add_subcommand("inspect-aspects", "Average aspect weights per relation");
  add_run_flags(inspect, f, false);
  inspect->add_option("--snapshot", f.snapshot, "Snapshot JSON")->required();

  auto* exportc = app.add_subcommand("export-embeddings", "Write root embeddings of selected nodes as CSV");
  add_run_flags(exportc, f, false);
  exportc->add_option("--snapshot", f.snapshot, "Snapshot JSON")->required();
  exportc->add_option("--node", f.nodes, "Node as type:id (input-file id) or type:*; repeatable");
  exportc->add_option("--nodes", f.nodes_file, "File with one type:id (or type<TAB>id) per line");

  auto* synth = app.add_subcommand("synth", "Generate a planted-aspect synthetic dataset");
  synth->add_option("--out", f.out, "Output directory (default: $DISENHAN_OUT_ROOT/synth)");
  synth->add_option("--seed", f.seed, "Generator seed");
  synth->add_option("--aspects", f.synth.aspects, "True number of aspects");
  synth->add_option("--users", f.synth.users, "Users");
  synth->add_option("--items", f.synth.items, "Items");
  synth->add_option("--density", f.synth.interactions_per_user, "Expected interactions per user");
  synth->add_option("--noise", f.synth.noise, "Item deviation from its context entities");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) {
      auto r = resolve(f);
      const auto out = out_dir(f, "train");
      if (!f.sweep.empty()) {
        cli::run_sweep(r, overrides(f), f.sweep, out, std::cout);
      } else {
        cli::cmd_train(r.run, out, std::cout);
      }
    } else if (*evaluate) {
      cli::cmd_evaluate(resolve(f), f.snapshot, out_dir(f, "evaluate"), data::parse_split(f.split), std::cout);
    } else if (*inspect) {
      cli::cmd_inspect_aspects(resolve(f), f.snapshot, out_dir(f, "inspect-aspects"), std::cout);
    } else if (*exportc) {
      auto nodes = f.nodes;
      if (!f.nodes_file.empty()) {
        auto more = cli::read_node_file(f.nodes_file);
        nodes.insert(nodes.end(), more.begin(), more.end());
      }
      cli::cmd_export_embeddings(resolve(f), f.snapshot, out_dir(f, "export-embeddings"), nodes, std::cout);
    } else if (*synth) {
      if (f.synth.aspects > 0 && f.synth.context.size() > 0) {
        for (std::size_t c = 0; c < f.synth.context.size(); ++c) f.synth.context[c].aspect = c % f.synth.aspects;
      }
      cli::cmd_synth(f.synth, f.seed.value_or(1), out_dir(f, "synth"), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
