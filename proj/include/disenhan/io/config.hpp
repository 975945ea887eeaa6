#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenhan/data/interactions.hpp"
#include "disenhan/data/synthetic.hpp"
#include "disenhan/error.hpp"
#include "disenhan/hin/graph.hpp"
#include "disenhan/model/config.hpp"
#include "disenhan/train/trainer.hpp"

namespace disenhan::io {

using Json = nlohmann::ordered_json;

namespace detail {

// Copies j[key] into out when present, with a readable error on a type mismatch.
template <class T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* n : known) ok = ok || k == n;
    if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

}  // namespace detail

inline Json to_json(const model::ModelConfig& c) {
  Json layers = Json::array();
  for (const auto& l : c.layers) layers.push_back({{"d_out", l.d_out}, {"aspects", l.aspects}});
  return {{"d_in", c.d_in},           {"layers", layers},
          {"iterations", c.iterations}, {"dropout", c.dropout},
          {"norm_eps", c.norm_eps},     {"per_relation_transform", c.per_relation_transform}};
}

inline model::ModelConfig model_config_from_json(const nlohmann::json& j, model::ModelConfig c = {}) {
  detail::reject_unknown(j, {"d_in", "layers", "iterations", "dropout", "norm_eps", "per_relation_transform"}, "model");
  detail::read(j, "d_in", c.d_in, "model");
  detail::read(j, "iterations", c.iterations, "model");
  detail::read(j, "dropout", c.dropout, "model");
  detail::read(j, "norm_eps", c.norm_eps, "model");
  detail::read(j, "per_relation_transform", c.per_relation_transform, "model");
  if (j.contains("layers")) {
    c.layers.clear();
    for (const auto& l : j.at("layers")) {
      model::LayerShape s;
      detail::reject_unknown(l, {"d_out", "aspects"}, "model.layers[]");
      detail::read(l, "d_out", s.d_out, "model.layers[]");
      detail::read(l, "aspects", s.aspects, "model.layers[]");
      c.layers.push_back(s);
    }
  }
  return c;
}

inline Json to_json(const train::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"negative_ratio", c.negative_ratio},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"fanouts", c.fanouts},
          {"eval_negatives", c.eval_negatives},
          {"topn", c.topn},
          {"resample_negatives", c.resample_negatives},
          {"resample_neighbors", c.resample_neighbors},
          {"validate", c.validate},
          {"target_loss", c.target_loss},
          {"eval_chunk", c.eval_chunk}};
}

inline train::TrainConfig train_config_from_json(const nlohmann::json& j, train::TrainConfig c = {}) {
  detail::reject_unknown(j,
                         {"learning_rate", "batch_size", "negative_ratio", "max_epochs", "patience", "seed", "fanouts",
                          "eval_negatives", "topn", "resample_negatives", "resample_neighbors", "validate",
                          "target_loss", "eval_chunk"},
                         "train");
  detail::read(j, "learning_rate", c.learning_rate, "train");
  detail::read(j, "batch_size", c.batch_size, "train");
  detail::read(j, "negative_ratio", c.negative_ratio, "train");
  detail::read(j, "max_epochs", c.max_epochs, "train");
  detail::read(j, "patience", c.patience, "train");
  detail::read(j, "seed", c.seed, "train");
  detail::read(j, "fanouts", c.fanouts, "train");
  detail::read(j, "eval_negatives", c.eval_negatives, "train");
  detail::read(j, "topn", c.topn, "train");
  detail::read(j, "resample_negatives", c.resample_negatives, "train");
  detail::read(j, "resample_neighbors", c.resample_neighbors, "train");
  detail::read(j, "validate", c.validate, "train");
  detail::read(j, "target_loss", c.target_loss, "train");
  detail::read(j, "eval_chunk", c.eval_chunk, "train");
  return c;
}

inline Json to_json(const data::SyntheticSpec& s) {
  Json ctx = Json::array();
  for (const auto& c : s.context) ctx.push_back({{"name", c.name}, {"count", c.count}, {"aspect", c.aspect}});
  return {{"aspects", s.aspects},
          {"users", s.users},
          {"items", s.items},
          {"context", ctx},
          {"latent_dim", s.latent_dim},
          {"noise", s.noise},
          {"interactions_per_user", s.interactions_per_user},
          {"sharpness", s.sharpness}};
}

inline data::SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, data::SyntheticSpec s = {}) {
  detail::reject_unknown(
      j, {"aspects", "users", "items", "context", "latent_dim", "noise", "interactions_per_user", "sharpness"},
      "synthetic");
  detail::read(j, "aspects", s.aspects, "synthetic");
  detail::read(j, "users", s.users, "synthetic");
  detail::read(j, "items", s.items, "synthetic");
  detail::read(j, "latent_dim", s.latent_dim, "synthetic");
  detail::read(j, "noise", s.noise, "synthetic");
  detail::read(j, "interactions_per_user", s.interactions_per_user, "synthetic");
  detail::read(j, "sharpness", s.sharpness, "synthetic");
  if (j.contains("context")) {
    s.context.clear();
    for (const auto& c : j.at("context")) {
      data::ContextTypeSpec t;
      detail::read(c, "name", t.name, "synthetic.context[]");
      detail::read(c, "count", t.count, "synthetic.context[]");
      detail::read(c, "aspect", t.aspect, "synthetic.context[]");
      s.context.push_back(t);
    }
  }
  return s;
}

/// Everything a run needs: dataset location, model and training settings.
struct RunConfig {
  std::string manifest;
  std::string out_dir;
  model::ModelConfig model;
  train::TrainConfig train;
  data::SplitFractions split;
  bool apply_core_filter = true;
};

inline Json to_json(const RunConfig& r) {
  return {{"manifest", r.manifest},
          {"out_dir", r.out_dir},
          {"model", to_json(r.model)},
          {"train", to_json(r.train)},
          {"split", {{"train", r.split.train}, {"valid", r.split.valid}, {"test", r.split.test}}},
          {"apply_core_filter", r.apply_core_filter}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"manifest", "out_dir", "model", "train", "split", "apply_core_filter"}, "config");
  RunConfig r;
  detail::read(j, "manifest", r.manifest, "config");
  detail::read(j, "out_dir", r.out_dir, "config");
  detail::read(j, "apply_core_filter", r.apply_core_filter, "config");
  if (j.contains("model")) r.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) r.train = train_config_from_json(j.at("train"));
  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::reject_unknown(s, {"train", "valid", "test"}, "split");
    detail::read(s, "train", r.split.train, "split");
    detail::read(s, "valid", r.split.valid, "split");
    detail::read(s, "test", r.split.test, "split");
  }
  return r;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path, const std::string& what) {
  if (!std::filesystem::exists(path)) throw ConfigError(what + " not found: " + path.string());
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(what + " " + path.string() + " is not valid JSON: " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json to_json(const hin::Schema& s) {
  Json types = Json::array();
  for (std::size_t t = 0; t < s.node_type_count(); ++t) {
    const hin::NodeTypeId id{static_cast<std::uint32_t>(t)};
    types.push_back({{"name", s.node_type_name(id)}, {"count", s.node_count(id)}});
  }
  Json rels = Json::array();
  for (std::size_t r = 0; r < s.relation_count(); ++r) {
    const auto& m = s.relation(hin::RelationId{static_cast<std::uint32_t>(r)});
    rels.push_back({{"src", s.node_type_name(m.src_type)}, {"edge", s.edge_name(m.edge_type)}, {"dst", s.node_type_name(m.dst_type)}});
  }
  return {{"node_types", types}, {"relations", rels}};
}

inline hin::Schema schema_from_json(const nlohmann::json& j) {
  hin::Schema s;
  try {
    for (const auto& t : j.at("node_types")) s.add_node_type(t.at("name").get<std::string>(), t.at("count").get<std::size_t>());
    for (const auto& r : j.at("relations"))
      s.add_relation(r.at("src").get<std::string>(), r.at("edge").get<std::string>(), r.at("dst").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
  return s;
}

}  // namespace disenhan::io
