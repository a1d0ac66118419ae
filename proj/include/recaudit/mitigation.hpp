#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "recaudit/catalog.hpp"
#include "recaudit/errors.hpp"
#include "recaudit/groupspace.hpp"
#include "recaudit/metrics.hpp"
#include "recaudit/search.hpp"

namespace recaudit {

enum class MitigationStrategy { diversify, popularity_calibrate };

inline constexpr const char* to_string(MitigationStrategy s) {
  return s == MitigationStrategy::diversify ? "diversify" : "popularity_calibrate";
}

/// Strategy implied by the metric being repaired: low diversity calls for
/// diversification, popularity mismatch for calibration. Other metrics have
/// no dedicated re-ranker and default to diversification.
inline MitigationStrategy default_strategy(MetricId m) {
  return m == MetricId::urp ? MitigationStrategy::popularity_calibrate
                            : MitigationStrategy::diversify;
}

struct MitigationPlan {
  MetricId metric = MetricId::urd;
  double target_fraction = 0.10;
  std::vector<GroupKey> target_groups;
  MitigationStrategy strategy = MitigationStrategy::diversify;
  double lambda = 0.5;  // diversification trade-off weight
};

struct MetricPair {
  std::optional<double> before;
  std::optional<double> after;
};

struct GroupMitigationRow {
  GroupKey key;
  std::size_t size = 0;
  std::array<MetricPair, 5> metrics;  // indexed by MetricId; auc left unset per-group
};

struct MitigationReport {
  MitigationPlan plan;
  std::vector<GroupMitigationRow> groups;
  std::array<MetricPair, 5> overall_uf;  // indexed by MetricId
  std::size_t n_targeted_users = 0;      // members of target groups
  std::size_t n_modified_users = 0;      // actually re-ranked
};

/// Bottom ceil(fraction x count) of the evaluated groups, worst first
/// (direction-aware: for URP "worst" is the highest mismatch).
inline std::vector<GroupKey> select_worst_groups(std::vector<GroupStat> evaluated,
                                                 MetricId metric, double fraction) {
  if (evaluated.empty()) throw ConfigError("mitigation: no evaluated groups to select from");
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ConfigError("mitigation: target fraction must be in (0,1]");
  std::sort(evaluated.begin(), evaluated.end(), [metric](const GroupStat& a, const GroupStat& b) {
    return more_disadvantaged(metric, a, b);
  });
  const auto n = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(evaluated.size())));
  std::vector<GroupKey> keys;
  keys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) keys.push_back(evaluated[i].key);
  return keys;
}

/// Greedy MMR-style selection: seed with the top-scored candidate, then keep
/// adding the candidate with the best score minus lambda times its mean
/// Jaccard similarity to the already-selected items.
inline std::vector<std::size_t> rerank_diversity(const UserRecord& u, const Dataset& ds,
                                                 double lambda) {
  if (u.k < 2) throw ConfigError("rerank_diversity: k must be >= 2");
  const auto k = static_cast<std::size_t>(u.k);
  std::vector<std::size_t> selected{0};
  std::vector<bool> used(u.candidates.size(), false);
  used[0] = true;
  while (selected.size() < k) {
    std::size_t best = u.candidates.size();
    double best_obj = 0.0;
    for (std::size_t i = 0; i < u.candidates.size(); ++i) {
      if (used[i]) continue;
      double sim = 0.0;
      for (std::size_t s : selected)
        sim += tag_jaccard(ds.items[static_cast<std::size_t>(u.candidates[i].item)].tags,
                           ds.items[static_cast<std::size_t>(u.candidates[s].item)].tags);
      sim /= static_cast<double>(selected.size());
      const double obj = u.candidates[i].score - lambda * sim;
      if (best == u.candidates.size() || obj > best_obj) {
        best = i;
        best_obj = obj;
      }
    }
    used[best] = true;
    selected.push_back(best);
  }
  return selected;
}

/// Greedy calibration: each step adds the candidate bringing the running mean
/// popularity of the selected list closest to the history mean; near-ties
/// (within 1e-9) go to the higher-scored candidate.
inline std::vector<std::size_t> rerank_popularity(const UserRecord& u, const Dataset& ds) {
  if (u.history.empty()) throw ConfigError("rerank_popularity: empty history");
  double hist_rp = 0.0;
  for (std::int32_t h : u.history) hist_rp += ds.popularity(h);
  hist_rp /= static_cast<double>(u.history.size());

  const auto k = static_cast<std::size_t>(u.k);
  std::vector<std::size_t> selected;
  std::vector<bool> used(u.candidates.size(), false);
  double rp_sum = 0.0;
  while (selected.size() < k) {
    std::size_t best = u.candidates.size();
    double best_gap = 0.0;
    for (std::size_t i = 0; i < u.candidates.size(); ++i) {
      if (used[i]) continue;
      const double rp = ds.popularity(u.candidates[i].item);
      const double gap =
          std::fabs((rp_sum + rp) / static_cast<double>(selected.size() + 1) - hist_rp);
      if (best == u.candidates.size() || gap < best_gap - 1e-9 ||
          (std::fabs(gap - best_gap) <= 1e-9 && u.candidates[i].score > u.candidates[best].score)) {
        best = i;
        best_gap = gap;
      }
    }
    used[best] = true;
    selected.push_back(best);
    rp_sum += ds.popularity(u.candidates[best].item);
  }
  return selected;
}

/// Rebuilds the user with the selected candidates promoted to the list head;
/// the rest of the pool keeps its relative order. Rank-derived scores make
/// the new ordering the authoritative one for every rank-based metric.
inline UserRecord apply_rerank(const UserRecord& u, const std::vector<std::size_t>& selection) {
  UserRecord out = u;
  std::vector<bool> used(u.candidates.size(), false);
  out.candidates.clear();
  out.candidates.reserve(u.candidates.size());
  for (std::size_t i : selection) {
    out.candidates.push_back(u.candidates[i]);
    used[i] = true;
  }
  for (std::size_t i = 0; i < u.candidates.size(); ++i)
    if (!used[i]) out.candidates.push_back(u.candidates[i]);
  const auto n = out.candidates.size();
  for (std::size_t i = 0; i < n; ++i)
    out.candidates[i].score = static_cast<double>(n - i);
  return out;
}

/// Returns a copy of the dataset with every eligible user in the target
/// groups re-ranked; everyone else is carried over untouched.
inline Dataset apply_mitigation(const Dataset& ds, const GroupIndex& idx,
                                const MitigationPlan& plan, std::size_t* n_targeted = nullptr,
                                std::size_t* n_modified = nullptr) {
  std::unordered_set<std::uint32_t> targets;
  for (const GroupKey& k : plan.target_groups)
    if (const auto* members = idx.find(k)) targets.insert(members->begin(), members->end());

  Dataset out = ds;
  std::size_t modified = 0;
  for (std::uint32_t ui : targets) {
    const UserRecord& u = ds.users[ui];
    if (plan.strategy == MitigationStrategy::diversify) {
      if (u.k < 2) continue;
      out.users[ui] = apply_rerank(u, rerank_diversity(u, ds, plan.lambda));
    } else {
      if (u.history.empty() || ds.total_train_interactions <= 0) continue;
      out.users[ui] = apply_rerank(u, rerank_popularity(u, ds));
    }
    ++modified;
  }
  if (n_targeted) *n_targeted = targets.size();
  if (n_modified) *n_modified = modified;
  return out;
}

inline MitigationReport evaluate_mitigation(const Dataset& ds, const GroupIndex& idx,
                                            const MitigationPlan& plan,
                                            const SizeFilter& filter) {
  if (plan.target_groups.empty()) throw ConfigError("mitigation: plan targets no groups");
  MitigationReport rep;
  rep.plan = plan;

  const UserMetricTable before = compute_table(ds);
  const Dataset mitigated =
      apply_mitigation(ds, idx, plan, &rep.n_targeted_users, &rep.n_modified_users);
  const UserMetricTable after = compute_table(mitigated);

  for (const GroupKey& k : plan.target_groups) {
    GroupMitigationRow row;
    row.key = k;
    if (const auto* members = idx.find(k)) {
      row.size = members->size();
      for (MetricId m : {MetricId::mrr, MetricId::ndcg, MetricId::urd, MetricId::urp}) {
        row.metrics[static_cast<std::size_t>(m)].before = try_group_mean(before, m, *members);
        row.metrics[static_cast<std::size_t>(m)].after = try_group_mean(after, m, *members);
      }
    }
    rep.groups.push_back(std::move(row));
  }

  for (MetricId m : kAllMetrics) {
    auto uf_of = [&](const UserMetricTable& t) -> std::optional<double> {
      try {
        return brute_force_search(idx, t, m, filter).uf;
      } catch (const SearchError&) {
        return std::nullopt;
      }
    };
    rep.overall_uf[static_cast<std::size_t>(m)] = {uf_of(before), uf_of(after)};
  }
  return rep;
}

}  // namespace recaudit
