#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenhan/data/interactions.hpp"
#include "disenhan/eval/metrics.hpp"
#include "disenhan/hin/sampling.hpp"
#include "disenhan/model/forward.hpp"
#include "disenhan/train/adam.hpp"

namespace disenhan::train {

struct TrainConfig {
  double learning_rate = 0.005;
  std::size_t batch_size = 1024;
  std::size_t negative_ratio = 4;
  std::size_t max_epochs = 100;
  std::size_t patience = 20;
  std::uint64_t seed = 1;
  std::vector<std::size_t> fanouts{10};  // per depth; the last entry repeats
  std::size_t eval_negatives = 100;
  std::size_t topn = 10;
  bool resample_negatives = true;
  bool resample_neighbors = true;
  bool validate = true;     // off: no validation, no early stopping
  double target_loss = 0;   // stop once an epoch's mean loss falls below this (0 = never)
  std::size_t eval_chunk = 2048;

  hin::FanoutPolicy fanout_policy() const {
    hin::FanoutPolicy f;
    f.per_depth = fanouts;
    return f;
  }

  void validate_config() const {
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (negative_ratio == 0) throw ConfigError("negative ratio must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (patience == 0) throw ConfigError("patience must be >= 1");
    if (topn == 0) throw ConfigError("topn must be positive");
    if (eval_negatives == 0) throw ConfigError("eval_negatives must be positive");
    if (fanouts.empty()) throw ConfigError("at least one fan-out is required");
    for (auto f : fanouts)
      if (f == 0) throw ConfigError("fan-outs must be positive");
  }
};

/// The graph and interaction log a recommender trains on.
struct RecTask {
  const hin::HinGraph& graph;
  const data::InteractionLog& log;
  hin::NodeTypeId user_type;
  hin::NodeTypeId item_type;
};

struct LabeledPair {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double label = 0;
};

/// `count` items drawn uniformly (with replacement) from those not in the
/// sorted `observed` list. Returns nothing when every item is observed.
inline std::vector<std::uint32_t> draw_negatives(std::span<const std::uint32_t> observed, std::size_t items,
                                                 std::size_t count, Rng& rng) {
  std::vector<std::uint32_t> out;
  const std::size_t free = items - observed.size();
  if (free == 0) return out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    // k-th unobserved item, found by walking the sorted observed list
    auto k = static_cast<std::uint32_t>(uniform_below(rng, free));
    for (std::uint32_t o : observed) {
      if (o <= k) {
        ++k;
      } else {
        break;
      }
    }
    out.push_back(k);
  }
  return out;
}

/// `ratio` negatives per train positive of user u, uniform over items u never
/// interacted with in the train split.
inline std::vector<std::uint32_t> sample_negatives(const data::InteractionLog& log, std::uint32_t u, std::size_t ratio,
                                                   std::uint64_t seed) {
  if (u >= log.users) throw DataError("unknown user " + std::to_string(u));
  const auto train = log.items_by_user(data::Split::train);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < log.records.size(); ++i)
    if (log.records[i].user == u && (log.split.empty() || log.split[i] == data::Split::train)) ++positives;
  Rng rng(derive_seed(seed, {u}));
  return draw_negatives(train[u], log.items, positives * ratio, rng);
}

/// Mean binary cross-entropy of a batch: one computation tree rooted at every
/// distinct user and item of the batch, scored by per-aspect inner products.
template <class Real>
num::Var<Real> batch_loss(num::Tape<Real>& tape, model::ModelParams<Real>& params, const RecTask& task,
                          std::span<const LabeledPair> batch, const hin::FanoutPolicy& fanouts, std::uint64_t seed,
                          model::Dropout dropout = {}) {
  std::vector<hin::NodeId> roots;
  roots.reserve(2 * batch.size());
  for (const auto& p : batch) {
    roots.push_back({task.user_type, p.user});
    roots.push_back({task.item_type, p.item});
  }
  auto tree = hin::build_computation_tree(task.graph, roots, params.config().depth(), fanouts, seed);
  model::ForwardOptions opts;
  opts.dropout = dropout;
  auto out = model::forward(tape, params, tree, opts);
  std::vector<std::int64_t> ur(batch.size()), ir(batch.size());
  std::vector<Real> labels(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    ur[j] = static_cast<std::int64_t>(out.row_of({task.user_type, batch[j].user}));
    ir[j] = static_cast<std::int64_t>(out.row_of({task.item_type, batch[j].item}));
    labels[j] = static_cast<Real>(batch[j].label);
  }
  auto s = num::rowdot(num::gather_rows(out.embeddings, std::move(ur)), num::gather_rows(out.embeddings, std::move(ir)));
  return num::binary_cross_entropy(num::sigmoid(s), labels);
}

/// Scores every candidate with root embeddings computed without gradients.
template <class Real>
eval::MetricReport evaluate_model(model::ModelParams<Real>& params, const RecTask& task,
                                  std::vector<eval::RankedList>& lists, const hin::FanoutPolicy& fanouts,
                                  std::uint64_t seed, std::size_t n, std::size_t chunk = 2048) {
  std::vector<hin::NodeId> nodes;
  std::vector<std::uint8_t> user_seen(task.graph.node_count(task.user_type), 0);
  std::vector<std::uint8_t> item_seen(task.graph.node_count(task.item_type), 0);
  for (const auto& l : lists) {
    if (!user_seen[l.user]++) nodes.push_back({task.user_type, l.user});
  }
  for (const auto& l : lists)
    for (auto i : l.items)
      if (!item_seen[i]++) nodes.push_back({task.item_type, i});
  const auto table = model::embed_nodes(params, task.graph, nodes, fanouts, seed, chunk);
  const std::size_t K = table.aspects;
  return eval::evaluate(
      lists,
      [&](std::uint32_t u, std::uint32_t i) {
        return model::score<Real>(table.of({task.user_type, u}), table.of({task.item_type, i}), K, K);
      },
      n);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0;
  std::optional<eval::MetricReport> valid;
  double seconds = 0;
  bool improved = false;

  nlohmann::ordered_json to_json(bool with_time = true) const {
    nlohmann::ordered_json j{{"epoch", epoch}, {"loss", loss}};
    if (valid) {
      j["precision"] = valid->precision;
      j["recall"] = valid->recall;
      j["ndcg"] = valid->ndcg;
    }
    j["improved"] = improved;
    if (with_time) j["seconds"] = seconds;
    return j;
  }
};

struct FitResult {
  std::size_t best_epoch = 0;
  double best_recall = -1;
  std::size_t epochs_run = 0;
  std::size_t skipped_positives = 0;  // positives of users who interacted with every item
  std::vector<EpochRecord> history;
};

template <class Real>
struct FitHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  // Replaces the built-in validation (used to exercise early stopping in isolation).
  std::function<eval::MetricReport(model::ModelParams<Real>&, std::size_t epoch)> validator;
};

/// Training loop: per epoch, resample negatives, shuffle positive groups, take
/// Adam steps on mean BCE per batch, then score the validation split. The
/// parameters end at the snapshot with the best validation Recall@N.
template <class Real>
FitResult fit(model::ModelParams<Real>& params, const RecTask& task, const TrainConfig& cfg,
              const FitHooks<Real>& hooks = {}) {
  cfg.validate_config();
  const auto& log = task.log;
  if (!log.is_split()) throw DataError("training requires a split interaction log");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> positives;
  for (const auto& x : log.of(data::Split::train)) positives.emplace_back(x.user, x.item);
  std::sort(positives.begin(), positives.end());
  positives.erase(std::unique(positives.begin(), positives.end()), positives.end());
  if (positives.empty()) throw DataError("train split is empty");
  const auto observed = log.items_by_user(data::Split::train);

  std::vector<eval::RankedList> valid_lists;
  if (cfg.validate && !hooks.validator) {
    if (log.count(data::Split::valid) == 0) throw DataError("validation split is empty");
    valid_lists = eval::build_eval_lists(log, data::Split::valid, cfg.eval_negatives, derive_seed(cfg.seed, {0xe7a1}));
  }
  const auto fanouts = cfg.fanout_policy();
  const std::uint64_t eval_seed = derive_seed(cfg.seed, {3});
  const std::size_t group = 1 + cfg.negative_ratio;
  const std::size_t groups_per_batch = std::max<std::size_t>(1, cfg.batch_size / group);

  Adam<Real> adam(AdamOptions{cfg.learning_rate});
  Rng dropout_rng(derive_seed(cfg.seed, {4}));
  const model::Dropout dropout{params.config().dropout, &dropout_rng};

  FitResult result;
  std::vector<num::Tensor<Real>> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& p : params.store()) best.push_back(p.value);
  };
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng neg_rng(derive_seed(cfg.seed, {1, cfg.resample_negatives ? epoch : 1}));
    std::vector<LabeledPair> stream;
    stream.reserve(positives.size() * group);
    std::vector<std::size_t> group_start;
    result.skipped_positives = 0;
    for (const auto& [u, i] : positives) {
      auto neg = draw_negatives(observed[u], log.items, cfg.negative_ratio, neg_rng);
      if (neg.empty()) {
        ++result.skipped_positives;
        continue;
      }
      group_start.push_back(stream.size());
      stream.push_back({u, i, 1.0});
      for (auto n : neg) stream.push_back({u, n, 0.0});
    }
    Rng shuffle_rng(derive_seed(cfg.seed, {5, epoch}));
    std::vector<std::size_t> order(group_start.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    for (std::size_t j = order.size(); j > 1; --j) std::swap(order[j - 1], order[uniform_below(shuffle_rng, j)]);

    double loss_sum = 0;
    std::size_t loss_n = 0;
    std::vector<LabeledPair> batch;
    for (std::size_t b = 0, start = 0; start < order.size(); ++b, start += groups_per_batch) {
      batch.clear();
      for (std::size_t j = start; j < std::min(order.size(), start + groups_per_batch); ++j) {
        const std::size_t g = group_start[order[j]];
        batch.insert(batch.end(), stream.begin() + static_cast<std::ptrdiff_t>(g),
                     stream.begin() + static_cast<std::ptrdiff_t>(g + group));
      }
      const std::uint64_t tree_seed = cfg.resample_neighbors ? derive_seed(cfg.seed, {2, epoch, b}) : derive_seed(cfg.seed, {2});
      num::Tape<Real> tape;
      auto loss = batch_loss(tape, params, task, batch, fanouts, tree_seed, dropout);
      params.store().zero_grad();
      tape.backward(loss);
      adam.step(params.store());
      loss_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(batch.size());
      loss_n += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0;
    if (hooks.validator) {
      rec.valid = hooks.validator(params, epoch);
    } else if (cfg.validate) {
      rec.valid = evaluate_model(params, task, valid_lists, fanouts, eval_seed, cfg.topn, cfg.eval_chunk);
      rec.valid->split = "valid";
      rec.valid->negatives = cfg.eval_negatives;
      rec.valid->seed = cfg.seed;
    }
    if (rec.valid) {
      if (result.best_epoch == 0 || rec.valid->recall > result.best_recall) {
        rec.improved = true;
        result.best_recall = rec.valid->recall;
        result.best_epoch = epoch;
        snapshot();
        since_best = 0;
      } else {
        ++since_best;
      }
    } else {
      rec.improved = true;
      result.best_epoch = epoch;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    result.epochs_run = epoch;
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (rec.valid && since_best >= cfg.patience) break;
    if (cfg.target_loss > 0 && rec.loss < cfg.target_loss) break;
  }
  if (!best.empty()) {
    std::size_t j = 0;
    for (auto& p : params.store()) p.value = best[j++];
  }
  return result;
}

}  // namespace disenhan::train
