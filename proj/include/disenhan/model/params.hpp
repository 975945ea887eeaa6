#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "disenhan/hin/graph.hpp"
#include "disenhan/model/config.hpp"
#include "disenhan/numcore/tape.hpp"
#include "disenhan/rng.hpp"

namespace disenhan::model {

/// All trainable state of the network, laid out in a ParamStore:
///   features/<type>                  free input embedding per node  [count, d_in]
///   layer<l>/proj/<type>             K channel projections stacked  [d_out, d_input]
///   layer<l>/att/<relation>          intra-relation attention       [2 * d_out / K]
///   layer<l>/sem/<relation>          semantic attention             [d_out / K]
///   layer<l>/W  (or W/<relation>)    square aspect transform        [d_out / K, d_out / K]
template <class Real>
class ModelParams {
 public:
  ModelParams(hin::Schema schema, ModelConfig config) : schema_(std::move(schema)), config_(std::move(config)) {
    config_.validate();
    const std::size_t L = config_.depth();
    for (std::size_t t = 0; t < schema_.node_type_count(); ++t) {
      const hin::NodeTypeId type{static_cast<std::uint32_t>(t)};
      store_.add(feature_name(type), num::Tensor<Real>({schema_.node_count(type), config_.d_in}));
    }
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t dk = config_.layers[l].aspect_dim();
      for (std::size_t t = 0; t < schema_.node_type_count(); ++t) {
        const hin::NodeTypeId type{static_cast<std::uint32_t>(t)};
        store_.add(projection_name(l, type), num::Tensor<Real>({config_.layers[l].d_out, config_.input_dim(l)}));
      }
      for (std::size_t r = 0; r < schema_.relation_count(); ++r) {
        const hin::RelationId rel{static_cast<std::uint32_t>(r)};
        store_.add(attention_name(l, rel), num::Tensor<Real>({2 * dk}));
        store_.add(semantic_name(l, rel), num::Tensor<Real>({dk}));
        if (config_.per_relation_transform) store_.add(transform_name(l, rel), num::Tensor<Real>({dk, dk}));
      }
      if (!config_.per_relation_transform) store_.add(transform_name(l, {}), num::Tensor<Real>({dk, dk}));
    }
  }

  /// Glorot-uniform for projections and attention, N(0, 0.1^2) for free embeddings.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& p : store_) {
      auto v = p.value.values();
      if (p.name.rfind("features/", 0) == 0) {
        for (auto& x : v) x = static_cast<Real>(0.1 * standard_normal(rng));
        continue;
      }
      const auto& s = p.value.shape();
      const double fan_out = s.size() == 2 ? static_cast<double>(s[0]) : 1.0;
      const double fan_in = s.size() == 2 ? static_cast<double>(s[1]) : static_cast<double>(s[0]);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& x : v) x = static_cast<Real>(limit * (2.0 * uniform_unit(rng) - 1.0));
    }
  }

  const hin::Schema& schema() const noexcept { return schema_; }
  const ModelConfig& config() const noexcept { return config_; }
  num::ParamStore<Real>& store() noexcept { return store_; }
  const num::ParamStore<Real>& store() const noexcept { return store_; }

  num::Parameter<Real>& features(hin::NodeTypeId t) { return store_.at(feature_name(t)); }
  num::Parameter<Real>& projection(std::size_t l, hin::NodeTypeId t) { return store_.at(projection_name(l, t)); }
  num::Parameter<Real>& attention(std::size_t l, hin::RelationId r) { return store_.at(attention_name(l, r)); }
  num::Parameter<Real>& semantic(std::size_t l, hin::RelationId r) { return store_.at(semantic_name(l, r)); }
  num::Parameter<Real>& transform(std::size_t l, hin::RelationId r) { return store_.at(transform_name(l, r)); }

  std::string feature_name(hin::NodeTypeId t) const { return "features/" + schema_.node_type_name(t); }
  std::string projection_name(std::size_t l, hin::NodeTypeId t) const {
    return layer_prefix(l) + "proj/" + schema_.node_type_name(t);
  }
  std::string attention_name(std::size_t l, hin::RelationId r) const {
    return layer_prefix(l) + "att/" + schema_.relation_key(r);
  }
  std::string semantic_name(std::size_t l, hin::RelationId r) const {
    return layer_prefix(l) + "sem/" + schema_.relation_key(r);
  }
  std::string transform_name(std::size_t l, hin::RelationId r) const {
    return config_.per_relation_transform ? layer_prefix(l) + "W/" + schema_.relation_key(r) : layer_prefix(l) + "W";
  }

 private:
  static std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l + 1) + "/"; }

  hin::Schema schema_;
  ModelConfig config_;
  num::ParamStore<Real> store_;
};

}  // namespace disenhan::model
