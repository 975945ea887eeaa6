#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "disenhan/data/dataset.hpp"
#include "disenhan/data/interactions.hpp"
#include "disenhan/data/synthetic.hpp"
#include "disenhan/eval/metrics.hpp"
#include "disenhan/rng.hpp"

using namespace disenhan;
using namespace disenhan::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("disenhan_data_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

InteractionLog log_with_timestamps(const std::vector<std::int64_t>& ts) {
  InteractionLog log;
  log.users = ts.size();
  log.items = 1;
  for (std::size_t i = 0; i < ts.size(); ++i) log.records.push_back({static_cast<std::uint32_t>(i), 0, ts[i]});
  return log;
}

// Amazon-shaped manifest: timestamped user-item interactions, item-item, item-brand, item-category.
fs::path write_amazon_manifest(const fs::path& dir, const std::string& interactions) {
  write_file(dir / "ui.tsv", interactions);
  write_file(dir / "ii.tsv", "0\t1\n1\t2\n");
  write_file(dir / "ib.tsv", "0\t0\n1\t0\n2\t1\n");
  write_file(dir / "ic.tsv", "0\t0\n1\t1\n2\t1\n");
  write_file(dir / "manifest.json", R"({
    "node_types": [{"name": "user", "count": 3}, {"name": "item", "count": 3},
                   {"name": "brand", "count": 2}, {"name": "category", "count": 2}],
    "interactions": {"file": "ui.tsv", "user_type": "user", "item_type": "item", "edge": "interact", "inverse": "interacted_by"},
    "relations": [
      {"src": "item", "edge": "also_bought", "dst": "item", "file": "ii.tsv"},
      {"src": "item", "edge": "has_brand", "dst": "brand", "file": "ib.tsv", "inverse": "brand_of"},
      {"src": "item", "edge": "in_category", "dst": "category", "file": "ic.tsv", "inverse": "category_of"}
    ]
  })");
  return dir / "manifest.json";
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> all_edges(const hin::HinGraph& g) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  for (std::size_t r = 0; r < g.schema().relation_count(); ++r) {
    auto e = g.edges(hin::RelationId{static_cast<std::uint32_t>(r)});
    out.insert(out.end(), e.begin(), e.end());
    out.emplace_back(~0u, ~0u);
  }
  return out;
}

}  // namespace

TEST(ChronologicalSplit, TenInteractionsGiveEightOneOne) {
  auto log = chronological_split(log_with_timestamps({5, 3, 9, 1, 7, 2, 8, 4, 6, 0}));
  EXPECT_EQ(log.count(Split::train), 8u);
  EXPECT_EQ(log.count(Split::valid), 1u);
  EXPECT_EQ(log.count(Split::test), 1u);
  EXPECT_EQ(log.of(Split::valid)[0].timestamp, 8);
  EXPECT_EQ(log.of(Split::test)[0].timestamp, 9);
}

TEST(ChronologicalSplit, EqualTimestampsKeepInputOrder) {
  auto log = chronological_split(log_with_timestamps(std::vector<std::int64_t>(10, 42)));
  for (std::uint32_t i = 0; i < 10; ++i) EXPECT_EQ(log.records[i].user, i);
  EXPECT_EQ(log.of(Split::test)[0].user, 9u);
  EXPECT_EQ(log.of(Split::valid)[0].user, 8u);
}

TEST(ChronologicalSplit, PartitionsAreTimeOrdered) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + uniform_below(rng, 200);
    std::vector<std::int64_t> ts(n);
    std::iota(ts.begin(), ts.end(), 0);
    for (std::size_t j = n; j > 1; --j) std::swap(ts[j - 1], ts[uniform_below(rng, j)]);
    auto log = chronological_split(log_with_timestamps(ts));
    std::int64_t max_train = -1, min_valid = INT64_MAX, max_valid = -1, min_test = INT64_MAX;
    for (std::size_t i = 0; i < n; ++i) {
      const auto t = log.records[i].timestamp;
      switch (log.split[i]) {
        case Split::train: max_train = std::max(max_train, t); break;
        case Split::valid:
          min_valid = std::min(min_valid, t);
          max_valid = std::max(max_valid, t);
          break;
        case Split::test: min_test = std::min(min_test, t); break;
      }
    }
    EXPECT_LE(max_train, min_valid);
    EXPECT_LE(max_valid, min_test);
    EXPECT_EQ(log.count(Split::train), n * 8 / 10);
  }
}

TEST(ChronologicalSplit, EmptyPartitionRejected) {
  EXPECT_THROW(chronological_split(log_with_timestamps({1, 2, 3})), DataError);
  EXPECT_THROW(chronological_split(log_with_timestamps({1, 2, 3, 4, 5}), {0.5, 0.6, 0.1}), ConfigError);
}

TEST(LoadDataset, AmazonManifest) {
  const auto dir = scratch_dir("amazon");
  const auto d = load_dataset(write_amazon_manifest(dir, "0\t0\t10\n1\t1\t20\n2\t2\t30\n0\t2\t40\n"));
  EXPECT_EQ(d.schema.node_type_count(), 4u);
  EXPECT_EQ(d.schema.relation_count(), 7u);
  ASSERT_EQ(d.log.records.size(), 4u);
  EXPECT_EQ(d.log.records[3], (Interaction{0, 2, 40}));
  const auto g = full_graph(d);
  EXPECT_EQ(g.edge_count(d.interact), 4u);
  EXPECT_EQ(g.edge_count(*d.interact_inverse), 4u);
  const auto brand_of = d.schema.relation_by_edge("brand_of");
  EXPECT_EQ(g.edge_count(brand_of), 3u);
  const auto n = g.neighbors({d.schema.node_type("brand"), 0}, d.schema.relation_by_edge("has_brand"));
  EXPECT_EQ(std::vector<std::uint32_t>(n.begin(), n.end()), (std::vector<std::uint32_t>{0, 1}));
}

TEST(LoadDataset, MinimalTwoLineFile) {
  const auto dir = scratch_dir("minimal");
  write_file(dir / "ui.tsv", "0\t1\n1\t0\n");
  write_file(dir / "manifest.json", R"({"node_types": [{"name": "u", "count": 2}, {"name": "i", "count": 2}],
    "interactions": {"file": "ui.tsv", "user_type": "u", "item_type": "i"}})");
  const auto d = load_dataset(dir / "manifest.json");
  const auto g = full_graph(d);
  EXPECT_EQ(d.schema.relation_count(), 1u);
  EXPECT_EQ(g.edge_count(), 2u);
}

TEST(LoadDataset, ShuffledLinesGiveIdenticalGraph) {
  const auto a = scratch_dir("order_a"), b = scratch_dir("order_b");
  const auto da = load_dataset(write_amazon_manifest(a, "0\t0\t1\n1\t1\t2\n2\t2\t3\n0\t2\t4\n2\t0\t5\n"));
  const auto db = load_dataset(write_amazon_manifest(b, "2\t0\t5\n0\t2\t4\n1\t1\t2\n0\t0\t1\n2\t2\t3\n"));
  EXPECT_EQ(all_edges(full_graph(da)), all_edges(full_graph(db)));
}

TEST(LoadDataset, MalformedLineNamesFileAndLine) {
  const auto dir = scratch_dir("malformed");
  try {
    load_dataset(write_amazon_manifest(dir, "0\t0\t1\n1\tx\t2\n"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("ui.tsv:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("malformed"), std::string::npos) << msg;
  }
}

TEST(LoadDataset, OutOfRangeIdRejected) {
  const auto dir = scratch_dir("range");
  try {
    load_dataset(write_amazon_manifest(dir, "0\t0\t1\n7\t0\t2\n"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("ui.tsv:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("out of range"), std::string::npos) << msg;
  }
}

TEST(LoadDataset, MissingManifest) {
  try {
    load_dataset("/nonexistent/manifest.json");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_STREQ(e.what(), "manifest not found: /nonexistent/manifest.json");
  }
}

TEST(LoadDataset, SaveRoundTrip) {
  SyntheticSpec spec;
  spec.users = 40;
  spec.items = 30;
  spec.interactions_per_user = 4;
  const auto syn = generate_synthetic(spec, 3);
  const auto path = save_dataset(syn.dataset, scratch_dir("roundtrip"));
  const auto back = load_dataset(path);
  EXPECT_EQ(back.log, syn.dataset.log);
  EXPECT_EQ(back.context, syn.dataset.context);
  EXPECT_EQ(all_edges(full_graph(back)), all_edges(full_graph(syn.dataset)));
}

namespace {

Dataset chain_dataset() {
  // u0 - i0, u1 - i0, u1 - i1 ; i0, i1 in category c0
  Dataset d;
  d.user_type = d.schema.add_node_type("user", 2);
  d.item_type = d.schema.add_node_type("item", 2);
  const auto cat = d.schema.add_node_type("category", 1);
  d.interact = d.schema.add_relation(d.user_type, "interact", d.item_type);
  ContextRelation c;
  c.forward = d.schema.add_relation(d.item_type, "in", cat);
  c.edges = {{0, 0}, {1, 0}};
  d.context.push_back(c);
  d.log.users = 2;
  d.log.items = 2;
  d.log.records = {{0, 0, 1}, {1, 0, 2}, {1, 1, 3}};
  d.reset_original_ids();
  return d;
}

}  // namespace

TEST(CoreFilter, ZeroThresholdIsIdentity) {
  const auto d = chain_dataset();
  const auto f = core_filter(d, {});
  EXPECT_EQ(f.log, d.log);
  EXPECT_EQ(f.context, d.context);
  EXPECT_EQ(f.original_ids, d.original_ids);
}

TEST(CoreFilter, CascadeToFixpoint) {
  // u0-i0, u1-i0 with min 2 interactions per node: both users drop, then i0.
  Dataset d;
  d.user_type = d.schema.add_node_type("user", 2);
  d.item_type = d.schema.add_node_type("item", 1);
  d.interact = d.schema.add_relation(d.user_type, "interact", d.item_type);
  d.log = {2, 1, {{0, 0, 1}, {1, 0, 2}}, {}};
  d.reset_original_ids();
  CoreThresholds th;
  th.min_user_interactions = 2;
  th.min_item_interactions = 2;
  const auto mask = core_filter_mask(d, th);
  EXPECT_EQ(mask.survivors(d.user_type), 0u);
  EXPECT_EQ(mask.survivors(d.item_type), 0u);
  EXPECT_EQ(mask.rounds, 3u);  // users, then i0, then a pass with no change
  EXPECT_THROW(core_filter(d, th), DataError);
}

TEST(CoreFilter, CascadeKeepsSurvivorsAndRemapsIds) {
  auto d = chain_dataset();
  CoreThresholds th;
  th.min_item_interactions = 2;  // i1 has one interaction, then u1 keeps only i0
  const auto f = core_filter(d, th);
  EXPECT_EQ(f.log.items, 1u);
  EXPECT_EQ(f.log.users, 2u);
  EXPECT_EQ(f.original_ids[f.item_type.value], (std::vector<std::uint32_t>{0}));
  EXPECT_EQ(f.context[0].edges, (EdgeList{{0, 0}}));
}

TEST(CoreFilter, ErrorListsSurvivors) {
  auto d = chain_dataset();
  CoreThresholds th;
  th.min_user_interactions = 5;
  try {
    core_filter(d, th);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'user'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("survivors"), std::string::npos) << msg;
  }
}

TEST(CoreFilter, SurvivorsMeetEveryThreshold) {
  SyntheticSpec spec;
  spec.users = 150;
  spec.items = 120;
  spec.interactions_per_user = 8;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto syn = generate_synthetic(spec, seed);
    CoreThresholds th;
    th.min_user_interactions = 6;
    th.min_item_interactions = 5;
    th.min_degree["item.has_brand.brand"] = 3;
    const auto f = core_filter(syn.dataset, th);
    std::vector<std::set<std::uint32_t>> per_user(f.log.users), per_item(f.log.items);
    for (const auto& x : f.log.records) {
      per_user[x.user].insert(x.item);
      per_item[x.item].insert(x.user);
    }
    std::vector<std::size_t> user_n(f.log.users), item_n(f.log.items);
    for (const auto& x : f.log.records) {
      ++user_n[x.user];
      ++item_n[x.item];
    }
    for (auto n : user_n) EXPECT_GE(n, 6u);
    for (auto n : item_n) EXPECT_GE(n, 5u);
    const auto g = full_graph(f);
    const auto brand = f.schema.node_type("brand");
    const auto rel = f.schema.relation_by_edge("has_brand");
    for (std::uint32_t b = 0; b < f.schema.node_count(brand); ++b) EXPECT_GE(g.degree({brand, b}, rel), 3u);
  }
}

TEST(Synthetic, SameSeedSameDataset) {
  SyntheticSpec spec;
  spec.users = 100;
  spec.items = 80;
  spec.interactions_per_user = 6;
  const auto a = generate_synthetic(spec, 9), b = generate_synthetic(spec, 9), c = generate_synthetic(spec, 10);
  EXPECT_EQ(a.dataset.log, b.dataset.log);
  EXPECT_EQ(a.dataset.context, b.dataset.context);
  EXPECT_EQ(a.truth.to_json(), b.truth.to_json());
  EXPECT_NE(a.dataset.log, c.dataset.log);
}

TEST(Synthetic, PlantedAspectsAndRejections) {
  SyntheticSpec spec;
  spec.users = 20;
  spec.items = 20;
  spec.interactions_per_user = 3;
  const auto s = generate_synthetic(spec, 1);
  EXPECT_EQ(s.truth.planted.at("brand.brand_of.item"), 0u);
  EXPECT_EQ(s.truth.planted.at("item.has_category.category"), 1u);
  EXPECT_EQ(s.truth.planted.size(), 2 * spec.context.size());
  const auto back = SyntheticTruth::from_json(s.truth.to_json());
  EXPECT_EQ(back.to_json(), s.truth.to_json());

  spec.interactions_per_user = 0;
  EXPECT_THROW(generate_synthetic(spec, 1), ConfigError);
  spec.interactions_per_user = 3;
  spec.context[0].aspect = 7;
  EXPECT_THROW(generate_synthetic(spec, 1), ConfigError);
}

TEST(Synthetic, SingleAspectNoiseFreeControl) {
  SyntheticSpec spec;
  spec.aspects = 1;
  spec.noise = 0;
  spec.users = 60;
  spec.items = 50;
  spec.interactions_per_user = 5;
  spec.context = {{"brand", 10, 0}};
  const auto s = generate_synthetic(spec, 4);
  // Items sharing a brand carry identical latents.
  const auto& e = s.dataset.context[0].edges;
  std::map<std::uint32_t, std::uint32_t> brand_of;
  for (auto [b, i] : e) brand_of[i] = b;
  for (std::uint32_t i = 0; i < 50; ++i) {
    for (std::uint32_t j = 0; j < 50; ++j) {
      if (brand_of[i] != brand_of[j]) continue;
      EXPECT_DOUBLE_EQ(s.truth.affinity(0, i), s.truth.affinity(0, j));
    }
  }
}

TEST(Synthetic, DefaultScaleStatisticsAndOracleCeiling) {
  const auto s = generate_synthetic(SyntheticSpec{}, 1);
  const double per_user = static_cast<double>(s.dataset.log.records.size()) / 2000.0;
  EXPECT_NEAR(per_user, 20.0, 2.0);
  auto log = chronological_split(s.dataset.log);
  EXPECT_NEAR(static_cast<double>(log.count(Split::train)), 0.8 * 40000, 4000);

  auto lists = eval::build_eval_lists(log, Split::test, 100, 7);
  const auto rep = eval::evaluate(lists, [&](std::uint32_t u, std::uint32_t i) { return s.truth.affinity(u, i); }, 10);
  EXPECT_GE(rep.recall, 0.9);
}
