#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "disenhan/io/config.hpp"
#include "disenhan/model/params.hpp"

namespace disenhan::io {

/// Model parameters with the schema and model config needed to rebuild them.
template <class Real>
Json snapshot_json(const model::ModelParams<Real>& params) {
  Json ps = Json::object();
  for (const auto& p : params.store()) {
    std::vector<double> v(p.value.values().begin(), p.value.values().end());
    ps[p.name] = {{"shape", p.value.shape()}, {"values", v}};
  }
  return {{"format", "disenhan-snapshot"},
          {"version", 1},
          {"model", to_json(params.config())},
          {"schema", to_json(params.schema())},
          {"params", ps}};
}

template <class Real>
void save_snapshot(const std::filesystem::path& path, const model::ModelParams<Real>& params) {
  write_text(path, snapshot_json(params).dump() + "\n");
}

/// Rebuilds parameters from a snapshot. When `expected` is given, its model
/// dimensions must match the snapshot's.
template <class Real>
model::ModelParams<Real> load_snapshot(const std::filesystem::path& path,
                                       const model::ModelConfig* expected = nullptr) {
  if (!std::filesystem::exists(path)) throw ConfigError("snapshot not found: " + path.string());
  const auto j = read_json_file(path, "snapshot");
  if (j.value("format", std::string{}) != "disenhan-snapshot") throw ConfigError("not a snapshot file: " + path.string());
  const auto cfg = model_config_from_json(j.at("model"));
  if (expected) {
    auto dims = [](const model::ModelConfig& c) {
      std::string s = "d_in=" + std::to_string(c.d_in) + ", layers (d_out/K) =";
      for (const auto& l : c.layers) s += " " + std::to_string(l.d_out) + "/" + std::to_string(l.aspects);
      return s;
    };
    bool same = expected->d_in == cfg.d_in && expected->layers.size() == cfg.layers.size() &&
                expected->per_relation_transform == cfg.per_relation_transform;
    for (std::size_t l = 0; same && l < cfg.layers.size(); ++l)
      same = expected->layers[l].d_out == cfg.layers[l].d_out && expected->layers[l].aspects == cfg.layers[l].aspects;
    if (!same) {
      throw ConfigError("snapshot/config dimension mismatch: snapshot has " + dims(cfg) + "; config asks for " +
                        dims(*expected));
    }
  }
  model::ModelConfig run_cfg = cfg;
  if (expected) run_cfg.iterations = expected->iterations;
  model::ModelParams<Real> params(schema_from_json(j.at("schema")), run_cfg);
  const auto& ps = j.at("params");
  for (auto& p : params.store()) {
    if (!ps.contains(p.name)) throw ConfigError("snapshot is missing parameter '" + p.name + "'");
    const auto& e = ps.at(p.name);
    const auto shape = e.at("shape").template get<num::Shape>();
    if (shape != p.value.shape()) {
      throw ConfigError("snapshot/config dimension mismatch: parameter '" + p.name + "' has shape " +
                        num::shape_str(shape) + " but the model expects " + num::shape_str(p.value.shape()));
    }
    const auto v = e.at("values").template get<std::vector<double>>();
    if (v.size() != p.value.size()) throw ConfigError("snapshot parameter '" + p.name + "' has the wrong value count");
    for (std::size_t i = 0; i < v.size(); ++i) p.value[i] = static_cast<Real>(v[i]);
  }
  if (ps.size() != params.store().size()) throw ConfigError("snapshot has parameters this model does not define");
  return params;
}

}  // namespace disenhan::io
