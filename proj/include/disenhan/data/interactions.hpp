#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "disenhan/error.hpp"

namespace disenhan::data {

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (expected train, valid or test)");
}

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

/// Timestamped user-item records. `split` is empty until chronological_split
/// labels every record.
struct InteractionLog {
  std::size_t users = 0;
  std::size_t items = 0;
  std::vector<Interaction> records;
  std::vector<Split> split;

  bool is_split() const noexcept { return split.size() == records.size() && !records.empty(); }

  std::vector<Interaction> of(Split s) const {
    std::vector<Interaction> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) out.push_back(records[i]);
    return out;
  }

  std::size_t count(Split s) const { return static_cast<std::size_t>(std::count(split.begin(), split.end(), s)); }

  /// Sorted, deduplicated items per user over the records whose split passes `keep`.
  template <class Pred>
  std::vector<std::vector<std::uint32_t>> items_by_user(Pred keep) const {
    std::vector<std::vector<std::uint32_t>> out(users);
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!keep(split.empty() ? Split::train : split[i])) continue;
      out[records[i].user].push_back(records[i].item);
    }
    for (auto& v : out) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return out;
  }

  std::vector<std::vector<std::uint32_t>> items_by_user(Split s) const {
    return items_by_user([s](Split x) { return x == s; });
  }

  std::vector<std::vector<std::uint32_t>> all_items_by_user() const {
    return items_by_user([](Split) { return true; });
  }

  bool operator==(const InteractionLog&) const = default;
};

struct SplitFractions {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

/// Global chronological split: one stable sort by timestamp, then the first
/// floor(train * n) records train, the next records up to floor((train + valid) * n)
/// validate and the rest test. Equal timestamps keep input order.
inline InteractionLog chronological_split(InteractionLog log, SplitFractions f = {}) {
  if (f.train < 0 || f.valid < 0 || f.test < 0 || std::abs(f.train + f.valid + f.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  const std::size_t n = log.records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return log.records[a].timestamp < log.records[b].timestamp; });
  std::vector<Interaction> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = log.records[order[i]];
  const auto n_train = static_cast<std::size_t>(std::floor(f.train * static_cast<double>(n) + 1e-9));
  const auto n_train_valid = static_cast<std::size_t>(std::floor((f.train + f.valid) * static_cast<double>(n) + 1e-9));
  if (n_train == 0 || n_train_valid == n_train || n_train_valid >= n) {
    throw DataError("chronological split of " + std::to_string(n) + " interactions leaves an empty partition (" +
                    std::to_string(n_train) + "/" + std::to_string(n_train_valid - std::min(n_train, n_train_valid)) +
                    "/" + std::to_string(n - std::min(n, n_train_valid)) + ")");
  }
  log.records = std::move(sorted);
  log.split.assign(n, Split::test);
  std::fill_n(log.split.begin(), n_train, Split::train);
  std::fill(log.split.begin() + static_cast<std::ptrdiff_t>(n_train),
            log.split.begin() + static_cast<std::ptrdiff_t>(n_train_valid), Split::valid);
  return log;
}

}  // namespace disenhan::data
