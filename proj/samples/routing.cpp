// One node, two relations, K=2: prints the aspect weights and the change in
// the embedding after every routing iteration.

#include <cstdio>

#include "disenhan/model/layer.hpp"
#include "disenhan/numcore/numcore.hpp"

using namespace disenhan;

int main() {
  const std::size_t K = 2, dk = 2, d = K * dk;
  num::Tape<double> tape(false);
  auto own = tape.constant(num::Tensor<double>({1, d}, {1.0, 0.0, 0.0, 1.0}));

  std::vector<model::RelationGroup<double>> groups;
  std::vector<model::RelationParams<double>> params;
  const std::vector<std::vector<double>> neighbors{{0.6, 0.8, 0.0, 1.0, 1.0, 0.0, 0.6, 0.8},
                                                   {0.0, 1.0, 1.0, 0.0, 0.8, 0.6, 1.0, 0.0}};
  for (std::uint32_t r = 0; r < 2; ++r) {
    model::RelationGroup<double> g;
    g.relation = hin::RelationId{r};
    g.fanout = 2;
    g.mask = {1, 1};
    g.neighbors = tape.constant(num::Tensor<double>({2, d}, neighbors[r]));
    model::finalize_group(g, 1);
    groups.push_back(std::move(g));
    params.push_back({tape.constant(num::Tensor<double>::vector({0.5, -0.2, 0.1, 0.3})),
                      tape.constant(num::Tensor<double>::vector({r == 0 ? 1.0 : -1.0, 0.5})),
                      tape.constant(num::Tensor<double>({dk, dk}, {1.0, 0.2, -0.1, 0.9}))});
  }

  for (std::size_t iters = 1; iters <= 5; ++iters) {
    auto res = model::propagate_node<double>(own, groups, params, K, iters, 1e-12, false);
    std::printf("I=%zu", iters);
    for (std::size_t r = 0; r < res.weights.size(); ++r) {
      const auto w = res.weights[r].value().values();
      std::printf("  r%zu = (%.3f, %.3f)", r, w[0], w[1]);
    }
    std::printf("  last delta %.2e\n", res.deltas.back());
  }
}
