#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "disenhan/model/forward.hpp"
#include "model_fixtures.hpp"
#include "test_util.hpp"

using namespace disenhan;
using namespace disenhan::model;
using disenhan::testing::random_instance;
using disenhan::testing::run_library;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  EXPECT_EQ(a.size(), b.size());
  double m = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

RelationGroup<double> one_target_group(num::Tape<double>& t, const std::vector<std::vector<double>>& sources,
                                       std::size_t d) {
  RelationGroup<double> g;
  g.fanout = sources.size();
  num::Tensor<double> nb({g.fanout, d});
  for (std::size_t s = 0; s < sources.size(); ++s) std::copy(sources[s].begin(), sources[s].end(), nb.data() + s * d);
  g.neighbors = t.constant(std::move(nb));
  g.mask.assign(g.fanout, 1);
  finalize_group(g, 1);
  return g;
}

}  // namespace

TEST(ContentTransform, SingleChannelIsUnitVector) {
  Rng rng(1);
  num::Tape<double> t;
  auto x = t.constant(disenhan::testing::random_tensor({6}, rng));
  auto P = t.constant(disenhan::testing::random_tensor({4, 6}, rng));
  auto c = content_transform(x, P, 1);
  EXPECT_EQ(c.shape(), (num::Shape{4}));
  const double n = disenhan::testing::norm2(c.value().values());
  EXPECT_TRUE(std::abs(n - 1.0) < 1e-12 || n == 0.0);
}

TEST(ContentTransform, FiveChannelsOfTwenty) {
  Rng rng(2);
  num::Tape<double> t;
  auto x = t.constant(disenhan::testing::random_tensor({100}, rng));
  auto P = t.constant(disenhan::testing::random_tensor({100, 100}, rng));
  auto c = content_transform(x, P, 5).value();
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(disenhan::testing::norm2(c.values().subspan(k * 20, 20)), 1.0, 1e-12);
}

TEST(ContentTransform, ZeroFeatureGivesZeroChannels) {
  Rng rng(3);
  num::Tape<double> t;
  auto c = content_transform(t.constant(num::Tensor<double>({10})),
                             t.constant(disenhan::testing::random_tensor({6, 10}, rng)), 3);
  for (double v : c.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(ContentTransform, IndivisibleWidthRejected) {
  num::Tape<double> t;
  EXPECT_THROW(content_transform(t.constant(num::Tensor<double>({3})), t.constant(num::Tensor<double>({5, 3})), 2),
               ShapeError);
}

TEST(IntraRelation, SingleNeighborGetsFullWeight) {
  Rng rng(4);
  const std::size_t K = 2, dk = 3, d = K * dk;
  const auto cs = disenhan::testing::random_vec(rng, d);
  num::Tape<double> t;
  auto g = one_target_group(t, {cs}, d);
  auto z = t.constant(num::Tensor<double>({1, d}, disenhan::testing::random_channels(rng, K, dk)));
  auto r = t.constant(num::Tensor<double>::filled({1, K}, 0.5));
  auto att = t.constant(disenhan::testing::random_tensor({2 * dk}, rng));
  auto out = intra_relation_attention(z, g, att, r, K).value();
  for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(out[j], std::max(cs[j], 0.0));
}

TEST(IntraRelation, DuplicateNeighborsMatchSingle) {
  Rng rng(5);
  const std::size_t K = 2, dk = 4, d = K * dk;
  const auto cs = disenhan::testing::random_channels(rng, K, dk);
  num::Tape<double> t;
  auto z = t.constant(num::Tensor<double>({1, d}, disenhan::testing::random_channels(rng, K, dk)));
  auto r = t.constant(num::Tensor<double>::filled({1, K}, 0.5));
  auto att = t.constant(disenhan::testing::random_tensor({2 * dk}, rng));
  auto one = intra_relation_attention(z, one_target_group(t, {cs}, d), att, r, K).value();
  auto two = intra_relation_attention(z, one_target_group(t, {cs, cs}, d), att, r, K).value();
  EXPECT_LT(max_abs_diff(one.values(), two.values()), 1e-15);
}

TEST(IntraRelation, PermutationInvariant) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t K = 1 + uniform_below(rng, 3), dk = 1 + uniform_below(rng, 4), d = K * dk;
    std::vector<std::vector<double>> src;
    for (std::size_t s = 0; s < 2 + uniform_below(rng, 5); ++s) src.push_back(disenhan::testing::random_channels(rng, K, dk));
    num::Tape<double> t;
    auto z = t.constant(num::Tensor<double>({1, d}, disenhan::testing::random_channels(rng, K, dk)));
    auto r = t.constant(num::Tensor<double>::filled({1, K}, 1.0 / K));
    auto att = t.constant(disenhan::testing::random_tensor({2 * dk}, rng));
    auto a = intra_relation_attention(z, one_target_group(t, src, d), att, r, K).value();
    std::reverse(src.begin(), src.end());
    std::rotate(src.begin(), src.begin() + 1, src.end());
    auto b = intra_relation_attention(z, one_target_group(t, src, d), att, r, K).value();
    EXPECT_LT(max_abs_diff(a.values(), b.values()), 1e-10);
  }
}

TEST(InterRelation, IdenticalSummariesGiveUniformWeights) {
  Rng rng(7);
  const std::size_t K = 4, dk = 3;
  std::vector<double> zrel;
  const auto one = disenhan::testing::random_vec(rng, dk);
  for (std::size_t k = 0; k < K; ++k) zrel.insert(zrel.end(), one.begin(), one.end());
  num::Tape<double> t;
  auto res = inter_relation_weights(t.constant(num::Tensor<double>({1, K * dk}, zrel)),
                                    t.constant(disenhan::testing::random_tensor({dk}, rng)),
                                    t.constant(disenhan::testing::random_tensor({dk, dk}, rng)), K);
  for (double v : res.weights.value().values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(InterRelation, SingleAspectWeightIsOne) {
  Rng rng(8);
  num::Tape<double> t;
  auto res = inter_relation_weights(t.constant(disenhan::testing::random_tensor({3, 5}, rng)),
                                    t.constant(disenhan::testing::random_tensor({5}, rng)),
                                    t.constant(disenhan::testing::random_tensor({5, 5}, rng)), 1);
  for (double v : res.weights.value().values()) EXPECT_EQ(v, 1.0);
}

TEST(InterRelation, WeightsOnSimplex) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t K = 1 + uniform_below(rng, 6), dk = 1 + uniform_below(rng, 5);
    num::Tape<double> t;
    auto res = inter_relation_weights(t.constant(disenhan::testing::random_tensor({2, K * dk}, rng, -3, 3)),
                                      t.constant(disenhan::testing::random_tensor({dk}, rng, -3, 3)),
                                      t.constant(disenhan::testing::random_tensor({dk, dk}, rng, -3, 3)), K);
    const auto w = res.weights.value().values();
    for (std::size_t row = 0; row < 2; ++row) {
      double s = 0;
      for (std::size_t k = 0; k < K; ++k) {
        EXPECT_GE(w[row * K + k], 0.0);
        s += w[row * K + k];
      }
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
  }
}

TEST(Propagate, ClosedFormSingleNeighbor) {
  Rng rng(10);
  const std::size_t dk = 4;
  auto inst = random_instance(rng, 1, dk, 1, 1, false);
  auto lib = run_library(inst, 1);
  // z = normalize(c + W relu(c_s))
  std::vector<double> expect = inst.c;
  const auto& rel = inst.relations[0];
  for (std::size_t i = 0; i < dk; ++i)
    for (std::size_t j = 0; j < dk; ++j) expect[i] += rel.W[i * dk + j] * std::max(rel.sources[0][j], 0.0);
  reference::normalize_chunks(expect, dk);
  EXPECT_LT(max_abs_diff(lib.z, expect), 1e-14);
  ASSERT_EQ(lib.r.size(), 1u);
  EXPECT_EQ(lib.r[0], std::vector<double>{1.0});
}

TEST(Propagate, NoRelationsReturnsOwnChannels) {
  Rng rng(11);
  auto inst = random_instance(rng, 3, 4, 0, 0, false);
  auto lib = run_library(inst, 5);
  EXPECT_LT(max_abs_diff(lib.z, inst.c), 1e-15);
}

TEST(Propagate, AbsentRelationsContributeNothing) {
  Rng rng(12);
  auto inst = random_instance(rng, 2, 3, 2, 3, false);
  auto with_empty = inst;
  reference::Relation empty = inst.relations[0];
  empty.sources.clear();
  with_empty.relations.push_back(empty);
  auto a = run_library(inst, 3);
  auto b = run_library(with_empty, 3);
  EXPECT_LT(max_abs_diff(a.z, b.z), 1e-15);
  EXPECT_TRUE(b.r[2].empty());
}

TEST(Propagate, MatchesPlainLoopReference) {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = 1 + uniform_below(rng, 4), dk = 1 + uniform_below(rng, 5);
    const std::size_t I = 1 + uniform_below(rng, 6);
    auto inst = random_instance(rng, K, dk, uniform_below(rng, 4), 6, true, uniform_unit(rng) < 0.5);
    auto lib = run_library(inst, I);
    auto ref = reference::propagate(inst.c, inst.relations, K, I);
    EXPECT_LT(max_abs_diff(lib.z, ref.z), 1e-12);
    for (std::size_t ri = 0; ri < inst.relations.size(); ++ri) {
      ASSERT_EQ(lib.r[ri].size(), ref.r[ri].size());
      if (!ref.r[ri].empty()) {
        EXPECT_LT(max_abs_diff(lib.r[ri], ref.r[ri]), 1e-12);
      }
    }
  }
}

TEST(Propagate, SimplexAndNormInvariants) {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = 1 + uniform_below(rng, 5), dk = 1 + uniform_below(rng, 6);
    auto inst = random_instance(rng, K, dk, 1 + uniform_below(rng, 3), 5, false);
    auto lib = run_library(inst, 1 + uniform_below(rng, 6), 0, true);
    for (const auto& r : lib.r) {
      double s = 0;
      for (double v : r) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
    for (const auto& z : lib.iterates) {
      for (std::size_t k = 0; k < K; ++k) {
        const double n = disenhan::testing::norm2(z.values().subspan(k * dk, dk));
        EXPECT_TRUE(std::abs(n - 1.0) <= 1e-10 || n == 0.0) << n;
      }
    }
  }
}

TEST(Propagate, IterationDeltasShrink) {
  Rng rng(15);
  double d2 = 0, d10 = 0;
  const int n = 100;
  for (int trial = 0; trial < n; ++trial) {
    auto inst = random_instance(rng, 5, 4, 1 + uniform_below(rng, 3), 8, false);
    auto lib = run_library(inst, 10);
    d2 += lib.deltas[1];
    d10 += lib.deltas[9];
  }
  EXPECT_LT(d10 / n, d2 / n);
  EXPECT_LT(d10 / n, 1e-2);
}

TEST(Propagate, PaddingNeutral) {
  Rng rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_instance(rng, 3, 3, 3, 4, true);
    auto a = run_library(inst, 4);
    auto b = run_library(inst, 4, 1 + uniform_below(rng, 5));
    EXPECT_LT(max_abs_diff(a.z, b.z), 1e-10);
  }
}

TEST(Propagate, SingleAspectHasUnitWeightsAndStableRouting) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    // one neighbor per relation: attention cannot reweight anything
    auto inst = random_instance(rng, 1, 4, 1 + uniform_below(rng, 3), 1, false);
    auto one = run_library(inst, 1);
    auto five = run_library(inst, 5, 0, true);
    EXPECT_LT(max_abs_diff(one.z, five.z), 1e-10);
    for (const auto& r : five.r) EXPECT_EQ(r, std::vector<double>{1.0});
  }
}

TEST(Score, Examples) {
  const std::vector<double> z{0.6, 0.8, 1.0, 0.0};
  EXPECT_NEAR(score<double>(z, z, 2, 2), 2.0, 1e-15);
  const std::vector<double> o{0.8, -0.6, 0.0, 1.0};
  EXPECT_NEAR(score<double>(z, o, 2, 2), 0.0, 1e-15);
  EXPECT_NEAR(score<double>(z, o, 1, 1), 0.6 * 0.8 - 0.8 * 0.6, 1e-15);
  EXPECT_THROW(score<double>(z, z, 2, 1), ShapeError);
}

TEST(Predict, Examples) {
  EXPECT_EQ(predict(0.0), 0.5);
  EXPECT_NEAR(predict(5.0), 0.9933, 1e-4);
  EXPECT_LT(predict(-1.0), predict(1.0));
  EXPECT_GT(predict(-800.0), -1e-300);
  EXPECT_LE(predict(800.0), 1.0);
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.layers = {{100, 3}};
  EXPECT_THROW(c.validate(), ConfigError);
  c.layers = {{100, 2}, {100, 5}};
  EXPECT_THROW(c.validate(), ConfigError);
  c.layers = {{100, 5}, {100, 2}};
  EXPECT_NO_THROW(c.validate());
}

class ForwardTest : public ::testing::Test {
 protected:
  disenhan::testing::ToyHin toy = disenhan::testing::toy_hin(4, 4, 2, 3, 8);
  hin::FanoutPolicy fanouts;

  ModelConfig config(std::vector<LayerShape> layers, std::size_t d_in = 6, std::size_t I = 2) {
    ModelConfig c;
    c.d_in = d_in;
    c.layers = std::move(layers);
    c.iterations = I;
    return c;
  }
};

TEST_F(ForwardTest, SingleLayerMatchesReferenceRouting) {
  ModelParams<double> params(toy.schema, config({{6, 2}}, 5, 3));
  params.initialize(7);
  const auto& s = toy.schema;
  for (std::uint32_t u = 0; u < 4; ++u) {
    std::vector<hin::NodeId> roots{{s.node_type("user"), u}};
    auto tree = hin::build_computation_tree(toy.graph, roots, 1, fanouts, 1);
    num::Tape<double> tape(false);
    auto out = forward(tape, params, tree);
    auto feat = [&](hin::NodeId n) {
      const auto& f = params.features(n.type).value;
      return std::vector<double>(f.data() + n.index * 5, f.data() + n.index * 5 + 5);
    };
    auto proj = [&](hin::NodeTypeId t) {
      const auto& p = params.projection(0, t).value.values();
      return std::vector<double>(p.begin(), p.end());
    };
    auto c_u = reference::content(feat(roots[0]), proj(s.node_type("user")), 6, 2);
    std::vector<reference::Relation> rels;
    for (hin::RelationId r : s.relations_into(s.node_type("user"))) {
      reference::Relation rel;
      const auto src_t = s.relation(r).src_type;
      for (auto i : toy.graph.neighbors(roots[0], r)) rel.sources.push_back(reference::content(feat({src_t, i}), proj(src_t), 6, 2));
      auto vals = [](const num::Parameter<double>& p) { return std::vector<double>(p.value.values().begin(), p.value.values().end()); };
      rel.att = vals(params.attention(0, r));
      rel.sem = vals(params.semantic(0, r));
      rel.W = vals(params.transform(0, r));
      rels.push_back(std::move(rel));
    }
    auto ref = reference::propagate(c_u, rels, 2, 3);
    const auto row = out.embeddings.value().values().subspan(out.row_of(roots[0]) * 6, 6);
    EXPECT_LT(max_abs_diff(row, ref.z), 1e-12);
  }
}

TEST_F(ForwardTest, TwoLayersFeedConcatenatedAspects) {
  ModelParams<double> params(toy.schema, config({{10, 5}, {10, 5}}, 10));
  EXPECT_EQ(params.projection(0, hin::NodeTypeId{0}).value.shape(), (num::Shape{10, 10}));
  params.initialize(3);
  std::vector<hin::NodeId> roots{{hin::NodeTypeId{0}, 0}, {hin::NodeTypeId{1}, 2}};
  auto tree = hin::build_computation_tree(toy.graph, roots, 2, fanouts, 5);
  num::Tape<double> tape(false);
  auto out = forward(tape, params, tree);
  EXPECT_EQ(out.embeddings.shape(), (num::Shape{2, 10}));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t k = 0; k < 5; ++k)
      EXPECT_NEAR(disenhan::testing::norm2(out.embeddings.value().values().subspan(r * 10 + k * 2, 2)), 1.0, 1e-10);
}

TEST_F(ForwardTest, DepthMismatchRejected) {
  ModelParams<double> params(toy.schema, config({{4, 2}, {4, 2}}));
  std::vector<hin::NodeId> roots{{hin::NodeTypeId{0}, 0}};
  auto tree = hin::build_computation_tree(toy.graph, roots, 1, fanouts, 5);
  num::Tape<double> tape(false);
  EXPECT_THROW(forward(tape, params, tree), ShapeError);
}

TEST_F(ForwardTest, DeepProjectionReceivesGradient) {
  ModelParams<double> params(toy.schema, config({{4, 2}, {4, 2}}));
  params.initialize(11);
  std::vector<hin::NodeId> roots{{hin::NodeTypeId{0}, 0}, {hin::NodeTypeId{1}, 0}};
  auto tree = hin::build_computation_tree(toy.graph, roots, 2, fanouts, 5);
  num::Tape<double> tape;
  auto out = forward(tape, params, tree);
  auto u = num::gather_rows(out.embeddings, {static_cast<std::int64_t>(out.row_of(roots[0]))});
  auto v = num::gather_rows(out.embeddings, {static_cast<std::int64_t>(out.row_of(roots[1]))});
  params.store().zero_grad();
  tape.backward(num::sum(num::rowdot(u, v)));
  double g = 0;
  for (double x : params.projection(1, hin::NodeTypeId{1}).grad.values()) g += std::abs(x);
  EXPECT_GT(g, 0.0);
}

TEST_F(ForwardTest, PaddingAndDeterminism) {
  ModelParams<double> params(toy.schema, config({{6, 3}, {6, 3}}));
  params.initialize(5);
  std::vector<hin::NodeId> roots{{hin::NodeTypeId{0}, 1}, {hin::NodeTypeId{1}, 3}};
  auto run = [&](std::size_t fanout) {
    hin::FanoutPolicy f;
    f.fallback = fanout;
    auto tree = hin::build_computation_tree(toy.graph, roots, 2, f, 9);
    num::Tape<double> tape(false);
    return forward(tape, params, tree).embeddings.value();
  };
  // Every degree in the toy graph is below 8, so larger fan-outs only add padding.
  const auto a = run(8);
  EXPECT_LT(max_abs_diff(a.values(), run(12).values()), 1e-10);
  EXPECT_EQ(a, run(8));
}

TEST_F(ForwardTest, EmbedNodesIndependentOfChunking) {
  ModelParams<double> params(toy.schema, config({{6, 3}, {6, 3}}));
  params.initialize(5);
  std::vector<hin::NodeId> nodes;
  for (std::uint32_t u = 0; u < 4; ++u) nodes.push_back({hin::NodeTypeId{0}, u});
  for (std::uint32_t i = 0; i < 4; ++i) nodes.push_back({hin::NodeTypeId{1}, i});
  hin::FanoutPolicy f;
  f.fallback = 2;
  auto a = embed_nodes(params, toy.graph, nodes, f, 3, 8);
  auto b = embed_nodes(params, toy.graph, nodes, f, 3, 3);
  for (std::size_t t = 0; t < 2; ++t) EXPECT_EQ(a.per_type[t], b.per_type[t]);
}

TEST_F(ForwardTest, StatsRowsOnSimplex) {
  ModelParams<double> params(toy.schema, config({{6, 3}, {6, 3}}));
  params.initialize(5);
  std::vector<hin::NodeId> nodes;
  for (std::uint32_t u = 0; u < 4; ++u) nodes.push_back({hin::NodeTypeId{0}, u});
  auto table = embed_nodes(params, toy.graph, nodes, fanouts, 3, 2048, true);
  std::size_t rows = 0;
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t r = 0; r < toy.schema.relation_count(); ++r) {
      if (table.stats.counts[l][r] == 0) continue;
      auto m = table.stats.mean(l, r);
      EXPECT_NEAR(std::accumulate(m.begin(), m.end(), 0.0), 1.0, 1e-10);
      ++rows;
    }
  EXPECT_GT(rows, 0u);
}
