#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenhan/data/dataset.hpp"
#include "disenhan/rng.hpp"

namespace disenhan::data {

struct ContextTypeSpec {
  std::string name;
  std::size_t count = 0;
  std::size_t aspect = 0;  // the latent aspect this entity type drives
};

struct SyntheticSpec {
  std::size_t aspects = 3;
  std::size_t users = 2000;
  std::size_t items = 1000;
  std::vector<ContextTypeSpec> context{{"brand", 50, 0}, {"category", 30, 1}, {"style", 20, 2}};
  std::size_t latent_dim = 4;          // per aspect
  double noise = 0.3;                  // item deviation from its entities, relative to entity scale
  double interactions_per_user = 20.0;
  double sharpness = 4.0;              // slope of the logistic on standardized affinities

  void validate() const {
    if (aspects == 0) throw ConfigError("synthetic spec: aspects must be >= 1");
    if (users == 0 || items == 0) throw ConfigError("synthetic spec: users and items must be positive");
    if (latent_dim == 0) throw ConfigError("synthetic spec: latent_dim must be positive");
    if (!(interactions_per_user > 0) || interactions_per_user >= static_cast<double>(items))
      throw ConfigError("synthetic spec: interactions_per_user must lie in (0, items)");
    if (noise < 0 || sharpness <= 0) throw ConfigError("synthetic spec: noise must be >= 0 and sharpness > 0");
    for (const auto& c : context) {
      if (c.count == 0) throw ConfigError("synthetic spec: context type '" + c.name + "' has no entities");
      if (c.aspect >= aspects) {
        throw ConfigError("synthetic spec: context type '" + c.name + "' planted on aspect " + std::to_string(c.aspect) +
                          " but only " + std::to_string(aspects) + " aspects exist");
      }
    }
  }
};

/// What the generator planted, for comparison against learned aspect weights.
struct SyntheticTruth {
  std::size_t aspects = 0;
  std::size_t latent_dim = 0;
  std::map<std::string, std::size_t> planted;  // relation key -> aspect
  std::vector<double> user_latent;             // [users, aspects * latent_dim]
  std::vector<double> item_latent;             // [items, aspects * latent_dim]
  double threshold = 0;
  double scale = 1;

  double affinity(std::uint32_t u, std::uint32_t i) const {
    const std::size_t w = aspects * latent_dim;
    double s = 0;
    for (std::size_t j = 0; j < w; ++j) s += user_latent[u * w + j] * item_latent[i * w + j];
    return s / scale;
  }

  nlohmann::ordered_json to_json() const {
    return {{"aspects", aspects}, {"latent_dim", latent_dim}, {"planted", planted}, {"threshold", threshold},
            {"scale", scale},     {"user_latent", user_latent}, {"item_latent", item_latent}};
  }

  static SyntheticTruth from_json(const nlohmann::json& j) {
    SyntheticTruth t;
    t.aspects = j.at("aspects").get<std::size_t>();
    t.latent_dim = j.at("latent_dim").get<std::size_t>();
    t.planted = j.at("planted").get<std::map<std::string, std::size_t>>();
    t.threshold = j.at("threshold").get<double>();
    t.scale = j.at("scale").get<double>();
    t.user_latent = j.at("user_latent").get<std::vector<double>>();
    t.item_latent = j.at("item_latent").get<std::vector<double>>();
    return t;
  }
};

struct SyntheticData {
  Dataset dataset;
  SyntheticTruth truth;
};

/// Planted-aspect HIN. Every item links to one entity of each context type;
/// an item's aspect-k latent block is the mean of the entity vectors planted on
/// k plus item noise. Users draw one latent block per aspect. A pair interacts
/// with probability logistic(sharpness * (affinity - threshold)), with the
/// threshold solved so the expected count per user hits the target density.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t K = spec.aspects, m = spec.latent_dim, w = K * m;
  Rng rng(derive_seed(seed, {0x5e17}));
  const double unit = 1.0 / std::sqrt(static_cast<double>(m));

  SyntheticData out;
  Dataset& d = out.dataset;
  SyntheticTruth& truth = out.truth;
  truth.aspects = K;
  truth.latent_dim = m;

  d.user_type = d.schema.add_node_type("user", spec.users);
  d.item_type = d.schema.add_node_type("item", spec.items);
  d.interact = d.schema.add_relation(d.user_type, "interact", d.item_type);
  d.interact_inverse = d.schema.add_relation(d.item_type, "interacted_by", d.user_type);

  std::vector<std::vector<double>> entity(spec.context.size());
  std::vector<std::vector<std::uint32_t>> link(spec.context.size());
  for (std::size_t c = 0; c < spec.context.size(); ++c) {
    const auto& ct = spec.context[c];
    const auto type = d.schema.add_node_type(ct.name, ct.count);
    ContextRelation rel;
    rel.forward = d.schema.add_relation(type, ct.name + "_of", d.item_type);
    rel.inverse = d.schema.add_relation(d.item_type, "has_" + ct.name, type);
    truth.planted[d.schema.relation_key(rel.forward)] = ct.aspect;
    truth.planted[d.schema.relation_key(*rel.inverse)] = ct.aspect;
    entity[c].resize(ct.count * m);
    for (auto& v : entity[c]) v = unit * standard_normal(rng);
    link[c].resize(spec.items);
    for (std::uint32_t i = 0; i < spec.items; ++i) {
      link[c][i] = static_cast<std::uint32_t>(uniform_below(rng, ct.count));
      rel.edges.emplace_back(link[c][i], i);
    }
    d.context.push_back(std::move(rel));
  }

  truth.item_latent.assign(spec.items * w, 0.0);
  for (std::uint32_t i = 0; i < spec.items; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      double* block = truth.item_latent.data() + i * w + k * m;
      std::size_t drivers = 0;
      for (std::size_t c = 0; c < spec.context.size(); ++c) {
        if (spec.context[c].aspect != k) continue;
        ++drivers;
        for (std::size_t j = 0; j < m; ++j) block[j] += entity[c][link[c][i] * m + j];
      }
      for (std::size_t j = 0; j < m; ++j) {
        if (drivers) block[j] /= static_cast<double>(drivers);
        block[j] += (drivers ? spec.noise : 1.0) * unit * standard_normal(rng);
      }
    }
  }
  truth.user_latent.resize(spec.users * w);
  for (auto& v : truth.user_latent) v = unit * standard_normal(rng);

  const std::size_t pairs = spec.users * spec.items;
  std::vector<double> aff(pairs);
  double sum = 0, sq = 0;
  for (std::uint32_t u = 0; u < spec.users; ++u)
    for (std::uint32_t i = 0; i < spec.items; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < w; ++j) s += truth.user_latent[u * w + j] * truth.item_latent[i * w + j];
      aff[u * spec.items + i] = s;
      sum += s;
      sq += s * s;
    }
  const double mean = sum / static_cast<double>(pairs);
  truth.scale = std::sqrt(std::max(sq / static_cast<double>(pairs) - mean * mean, 1e-300));
  for (auto& a : aff) a /= truth.scale;

  const double target = spec.interactions_per_user * static_cast<double>(spec.users);
  auto expected = [&](double theta) {
    double e = 0;
    for (double a : aff) e += 1.0 / (1.0 + std::exp(-spec.sharpness * (a - theta)));
    return e;
  };
  double lo = -50, hi = 50;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) > target ? lo : hi) = mid;
  }
  truth.threshold = 0.5 * (lo + hi);

  d.log.users = spec.users;
  d.log.items = spec.items;
  for (std::uint32_t u = 0; u < spec.users; ++u)
    for (std::uint32_t i = 0; i < spec.items; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-spec.sharpness * (aff[u * spec.items + i] - truth.threshold)));
      if (uniform_unit(rng) < p) {
        d.log.records.push_back({u, i, static_cast<std::int64_t>(uniform_below(rng, 1000000000ULL))});
      }
    }
  if (d.log.records.empty()) throw DataError("synthetic generator produced no interactions");
  d.reset_original_ids();
  return out;
}

}  // namespace disenhan::data
