#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "recaudit/errors.hpp"
#include "recaudit/groupspace.hpp"
#include "recaudit/metrics.hpp"
#include "recaudit/rng.hpp"

namespace recaudit {

struct GroupStat {
  GroupKey key;
  double mean = 0.0;
  std::size_t size = 0;
};

/// "best" is the advantaged group: highest mean, except for URP where a low
/// popularity mismatch is the favourable outcome.
inline bool more_advantaged(MetricId m, const GroupStat& a, const GroupStat& b) {
  if (a.mean != b.mean) return higher_is_better(m) ? a.mean > b.mean : a.mean < b.mean;
  return a.key < b.key;
}

inline bool more_disadvantaged(MetricId m, const GroupStat& a, const GroupStat& b) {
  if (a.mean != b.mean) return higher_is_better(m) ? a.mean < b.mean : a.mean > b.mean;
  return a.key < b.key;
}

inline double compute_uf(double mean_a, double mean_d) { return std::fabs(mean_a - mean_d); }

struct SearchResult {
  MetricId metric = MetricId::auc;
  GroupStat best;   // advantaged extreme
  GroupStat worst;  // disadvantaged extreme
  double uf = 0.0;
  std::size_t groups_evaluated = 0;
  double wall_time_s = 0.0;
  bool truncated = false;
  std::vector<GroupStat> top_advantaged;
  std::vector<GroupStat> top_disadvantaged;
  std::vector<GroupStat> evaluated;  // every group with a defined mean, key order
};

struct BudgetOptions {
  bool enabled = false;
  double seconds = 0.0;
  std::uint64_t shuffle_seed = 0;
};

// Fixed-time runs shuffle the enumeration order so a truncated pass is a
// uniform random sample of the group space rather than a lexicographic prefix.
namespace detail {

inline double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void finalize_result(SearchResult& res, MetricId metric, std::vector<GroupStat> stats,
                            std::size_t top_n, const char* engine, std::size_t min_defined = 2) {
  if (stats.size() < min_defined)
    throw SearchError(std::string(engine) + ": fewer than two groups with defined means (" +
                      std::to_string(stats.size()) + " found)");
  res.metric = metric;
  const auto adv_cmp = [metric](const GroupStat& a, const GroupStat& b) {
    return more_advantaged(metric, a, b);
  };
  const auto dis_cmp = [metric](const GroupStat& a, const GroupStat& b) {
    return more_disadvantaged(metric, a, b);
  };
  res.best = *std::min_element(stats.begin(), stats.end(), adv_cmp);
  res.worst = *std::min_element(stats.begin(), stats.end(), dis_cmp);
  res.uf = compute_uf(res.best.mean, res.worst.mean);
  // the orderings are total (mean, then key), so a partial sort of the first
  // n slots reproduces the head of the full sort
  const std::size_t n = std::min(top_n, stats.size());
  res.top_advantaged.resize(n);
  std::partial_sort_copy(stats.begin(), stats.end(), res.top_advantaged.begin(),
                         res.top_advantaged.end(), adv_cmp);
  res.top_disadvantaged.resize(n);
  std::partial_sort_copy(stats.begin(), stats.end(), res.top_disadvantaged.begin(),
                         res.top_disadvantaged.end(), dis_cmp);
  const auto key_cmp = [](const GroupStat& a, const GroupStat& b) { return a.key < b.key; };
  if (!std::is_sorted(stats.begin(), stats.end(), key_cmp))
    std::sort(stats.begin(), stats.end(), key_cmp);
  res.evaluated = std::move(stats);
}

inline SearchResult enumeration_search(const GroupIndex& idx, const UserMetricTable& table,
                                       MetricId metric, const SizeFilter& filter,
                                       std::size_t extra_min_size, std::size_t top_n,
                                       const BudgetOptions& budget, const char* engine) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<GroupKey> keys = enumerate_valid_groups(idx, filter);
  if (extra_min_size > 0) {
    std::erase_if(keys, [&](const GroupKey& k) { return idx.group_size(k) < extra_min_size; });
  }
  // budget runs visit keys through a shuffled permutation; ranks let a
  // truncated pass restore key order with an integer sort instead of
  // re-comparing keys
  std::vector<std::uint32_t> visit(keys.size());
  std::iota(visit.begin(), visit.end(), 0u);
  if (budget.enabled) {
    Rng r = Rng::from(budget.shuffle_seed, 0x656e756dULL);
    shuffle_inplace(visit, r);
  }

  SearchResult res;
  std::vector<GroupStat> stats;
  stats.reserve(keys.size());
  std::vector<std::uint32_t> ranks;
  ranks.reserve(keys.size());
  for (const std::uint32_t ki : visit) {
    if (budget.enabled && elapsed_s(t0) >= budget.seconds) {
      res.truncated = true;
      break;
    }
    ++res.groups_evaluated;
    const GroupKey& k = keys[ki];
    const auto* members = idx.find(k);
    if (auto mean = try_group_mean(table, metric, *members)) {
      stats.push_back({k, *mean, members->size()});
      ranks.push_back(ki);
    }
  }
  if (budget.enabled && !std::is_sorted(ranks.begin(), ranks.end())) {
    std::vector<std::uint32_t> by(stats.size());
    std::iota(by.begin(), by.end(), 0u);
    std::sort(by.begin(), by.end(),
              [&](std::uint32_t a, std::uint32_t b) { return ranks[a] < ranks[b]; });
    std::vector<GroupStat> ordered;
    ordered.reserve(stats.size());
    for (const std::uint32_t i : by) ordered.push_back(std::move(stats[i]));
    stats = std::move(ordered);
  }
  finalize_result(res, metric, std::move(stats), top_n, engine);
  res.wall_time_s = elapsed_s(t0);
  return res;
}

}  // namespace detail

/// Exact engine: every valid group's mean, computed once, exact extremes.
inline SearchResult brute_force_search(const GroupIndex& idx, const UserMetricTable& table,
                                       MetricId metric, const SizeFilter& filter,
                                       std::size_t top_n = 10,
                                       const BudgetOptions& budget = {}) {
  return detail::enumeration_search(idx, table, metric, filter, 0, top_n, budget, "brute");
}

/// Enumeration restricted to groups holding at least θ percent of the user
/// base; reported uf is a lower bound on the exact one.
inline SearchResult threshold_search(const GroupIndex& idx, const UserMetricTable& table,
                                     MetricId metric, double theta, const SizeFilter& filter,
                                     std::size_t top_n = 10, const BudgetOptions& budget = {}) {
  if (theta < 0.0 || !std::isfinite(theta)) throw ConfigError("theta must be >= 0");
  const auto min_size = static_cast<std::size_t>(
      std::ceil(theta / 100.0 * static_cast<double>(idx.n_users)));
  return detail::enumeration_search(idx, table, metric, filter, min_size, top_n, budget,
                                    "threshold");
}

}  // namespace recaudit
