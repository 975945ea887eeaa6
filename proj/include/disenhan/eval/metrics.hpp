#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenhan/data/interactions.hpp"
#include "disenhan/error.hpp"
#include "disenhan/rng.hpp"

namespace disenhan::eval {

/// Candidates for one user: split positives followed by sampled negatives.
struct RankedList {
  std::uint32_t user = 0;
  std::vector<std::uint32_t> items;
  std::vector<std::uint8_t> relevant;
  std::vector<double> scores;
  std::size_t shortfall = 0;  // negatives missing because too few items were eligible

  std::size_t positives() const {
    return static_cast<std::size_t>(std::count(relevant.begin(), relevant.end(), std::uint8_t{1}));
  }

  bool operator==(const RankedList&) const = default;
};

/// One list per user with at least one positive in `split`. Negatives are drawn
/// uniformly without replacement from items the user never touched in any split.
inline std::vector<RankedList> build_eval_lists(const data::InteractionLog& log, data::Split split,
                                                std::size_t n_neg = 100, std::uint64_t seed = 0) {
  if (!log.is_split()) throw DataError("evaluation lists require a split interaction log");
  const auto positives = log.items_by_user(split);
  const auto seen = log.all_items_by_user();
  std::vector<RankedList> out;
  for (std::uint32_t u = 0; u < log.users; ++u) {
    if (positives[u].empty()) continue;
    RankedList l;
    l.user = u;
    l.items = positives[u];
    l.relevant.assign(l.items.size(), 1);
    const std::size_t eligible = log.items - seen[u].size();
    const std::size_t want = std::min(n_neg, eligible);
    l.shortfall = n_neg - want;
    auto is_seen = [&](std::uint32_t i) { return std::binary_search(seen[u].begin(), seen[u].end(), i); };
    if (want == eligible) {
      for (std::uint32_t i = 0; i < log.items; ++i)
        if (!is_seen(i)) l.items.push_back(i);
    } else {
      Rng rng(derive_seed(seed, {u}));
      std::unordered_set<std::uint32_t> picked;
      while (picked.size() < want) {
        const auto i = static_cast<std::uint32_t>(uniform_below(rng, log.items));
        if (is_seen(i) || !picked.insert(i).second) continue;
        l.items.push_back(i);
      }
    }
    l.relevant.resize(l.items.size(), 0);
    l.scores.assign(l.items.size(), 0.0);
    out.push_back(std::move(l));
  }
  if (out.empty()) throw DataError(std::string("split '") + data::split_name(split) + "' has no interactions");
  return out;
}

/// Candidate positions by descending score, ties by ascending item id.
inline std::vector<std::size_t> ranking(const RankedList& l) {
  if (l.scores.size() != l.items.size()) throw ShapeError("ranked list has " + std::to_string(l.scores.size()) +
                                                          " scores for " + std::to_string(l.items.size()) + " items");
  std::vector<std::size_t> order(l.items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (l.scores[a] != l.scores[b]) return l.scores[a] > l.scores[b];
    return l.items[a] < l.items[b];
  });
  return order;
}

namespace detail {

inline void check_cutoff(std::size_t n) {
  if (n == 0) throw ConfigError("ranking cutoff N must be positive");
}

inline std::size_t hits_at(const RankedList& l, const std::vector<std::size_t>& order, std::size_t n) {
  std::size_t h = 0;
  for (std::size_t r = 0; r < std::min(n, order.size()); ++r) h += l.relevant[order[r]];
  return h;
}

}  // namespace detail

inline double precision_at(const RankedList& l, std::size_t n) {
  detail::check_cutoff(n);
  return static_cast<double>(detail::hits_at(l, ranking(l), n)) / static_cast<double>(n);
}

inline double recall_at(const RankedList& l, std::size_t n) {
  detail::check_cutoff(n);
  const std::size_t p = l.positives();
  if (p == 0) throw DataError("recall undefined for a list without positives");
  return static_cast<double>(detail::hits_at(l, ranking(l), n)) / static_cast<double>(p);
}

inline double ndcg_at(const RankedList& l, std::size_t n) {
  detail::check_cutoff(n);
  const std::size_t p = l.positives();
  if (p == 0) throw DataError("NDCG undefined for a list without positives");
  const auto order = ranking(l);
  double dcg = 0, idcg = 0;
  for (std::size_t r = 0; r < std::min(n, order.size()); ++r)
    if (l.relevant[order[r]]) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  for (std::size_t r = 0; r < std::min(n, p); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

struct UserMetrics {
  std::uint32_t user = 0;
  double precision = 0;
  double recall = 0;
  double ndcg = 0;

  bool operator==(const UserMetrics&) const = default;
};

struct MetricReport {
  std::size_t n = 10;
  std::size_t negatives = 100;
  std::uint64_t seed = 0;
  std::string split = "test";
  double precision = 0;
  double recall = 0;
  double ndcg = 0;
  std::vector<UserMetrics> per_user;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json users = nlohmann::ordered_json::array();
    for (const auto& u : per_user)
      users.push_back({{"user", u.user}, {"precision", u.precision}, {"recall", u.recall}, {"ndcg", u.ndcg}});
    return {{"split", split},
            {"n", n},
            {"negatives", negatives},
            {"seed", seed},
            {"users", per_user.size()},
            {"precision", precision},
            {"recall", recall},
            {"ndcg", ndcg},
            {"per_user", users}};
  }

  static std::string csv_header() {
    std::ostringstream s;
    s << "split,n,negatives,seed,users,precision,recall,ndcg";
    return s.str();
  }

  std::string csv_row() const {
    auto num = [](double v) { return nlohmann::json(v).dump(); };
    std::ostringstream s;
    s << split << ',' << n << ',' << negatives << ',' << seed << ',' << per_user.size() << ',' << num(precision) << ','
      << num(recall) << ',' << num(ndcg);
    return s.str();
  }

  bool operator==(const MetricReport&) const = default;
};

/// Unweighted mean over users of per-list metrics. Scores must be filled in.
inline MetricReport evaluate_lists(const std::vector<RankedList>& lists, std::size_t n) {
  detail::check_cutoff(n);
  MetricReport rep;
  rep.n = n;
  for (const auto& l : lists) {
    UserMetrics m{l.user, precision_at(l, n), recall_at(l, n), ndcg_at(l, n)};
    rep.precision += m.precision;
    rep.recall += m.recall;
    rep.ndcg += m.ndcg;
    rep.per_user.push_back(m);
  }
  if (!lists.empty()) {
    const auto c = static_cast<double>(lists.size());
    rep.precision /= c;
    rep.recall /= c;
    rep.ndcg /= c;
  }
  return rep;
}

/// Fills every list's scores with scorer(user, item) and aggregates.
template <class Scorer>
MetricReport evaluate(std::vector<RankedList>& lists, Scorer&& scorer, std::size_t n = 10) {
  for (auto& l : lists) {
    l.scores.resize(l.items.size());
    for (std::size_t j = 0; j < l.items.size(); ++j) l.scores[j] = static_cast<double>(scorer(l.user, l.items[j]));
  }
  return evaluate_lists(lists, n);
}

}  // namespace disenhan::eval
