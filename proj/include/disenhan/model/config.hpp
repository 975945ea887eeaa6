#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "disenhan/error.hpp"

namespace disenhan::model {

/// Width of one propagation layer: output size and number of aspects (channels).
struct LayerShape {
  std::size_t d_out = 100;
  std::size_t aspects = 5;

  std::size_t aspect_dim() const { return d_out / aspects; }
};

struct ModelConfig {
  std::size_t d_in = 100;
  // layers[0] is the layer that produces the root embedding (one hop away);
  // layers.back() is the deepest and reads the raw feature table.
  std::vector<LayerShape> layers{{100, 5}, {100, 5}};
  std::size_t iterations = 5;
  double dropout = 0.0;
  double norm_eps = 1e-12;
  // Give every relation its own square matrix instead of one shared per layer.
  bool per_relation_transform = false;

  std::size_t depth() const noexcept { return layers.size(); }

  /// Input width of layer index `l` (0-based, 0 = root layer).
  std::size_t input_dim(std::size_t l) const { return l + 1 == layers.size() ? d_in : layers.at(l + 1).d_out; }

  void validate() const {
    if (layers.empty()) throw ConfigError("model needs at least one layer");
    if (d_in == 0) throw ConfigError("d_in must be positive");
    if (iterations == 0) throw ConfigError("iterations must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& s = layers[l];
      if (s.aspects == 0 || s.d_out == 0) throw ConfigError("layer " + std::to_string(l + 1) + ": sizes must be positive");
      if (s.d_out % s.aspects != 0) {
        throw ConfigError("layer " + std::to_string(l + 1) + ": d_out " + std::to_string(s.d_out) +
                          " is not divisible by " + std::to_string(s.aspects) + " aspects");
      }
      if (l > 0 && s.aspects > layers[l - 1].aspects) {
        throw ConfigError("aspect counts must not increase with hop distance (layer " + std::to_string(l + 1) +
                          " has " + std::to_string(s.aspects) + " > " + std::to_string(layers[l - 1].aspects) + ")");
      }
    }
  }
};

}  // namespace disenhan::model
