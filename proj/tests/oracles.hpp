#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "recaudit/recaudit.hpp"

// Deliberately naive metric reimplementations (different algorithms from the
// library) used as cross-check oracles.
namespace oracle {

// probability a random (relevant, non-relevant) pair is ordered correctly,
// ties worth one half — O(n^2) pair enumeration
inline std::optional<double> auc_pairwise(const recaudit::UserRecord& u) {
  double num = 0.0;
  std::size_t n_rel = 0, n_non = 0;
  for (const auto& r : u.candidates) {
    if (!r.relevant) {
      ++n_non;
      continue;
    }
    ++n_rel;
    for (const auto& s : u.candidates) {
      if (s.relevant) continue;
      if (r.score > s.score)
        num += 1.0;
      else if (r.score == s.score)
        num += 0.5;
    }
  }
  if (n_rel == 0 || n_non == 0) return std::nullopt;
  return num / (static_cast<double>(n_rel) * static_cast<double>(n_non));
}

inline double mrr_scan(const recaudit::UserRecord& u) {
  for (std::int32_t p = 0; p < u.k; ++p)
    if (u.candidates[static_cast<std::size_t>(p)].relevant)
      return 1.0 / static_cast<double>(p + 1);
  return 0.0;
}

// explicit (2^rel - 1) gains, ideal list rebuilt by sorting relevance flags
inline std::optional<double> ndcg_direct(const recaudit::UserRecord& u) {
  std::vector<int> rel;
  for (const auto& c : u.candidates) rel.push_back(c.relevant ? 1 : 0);
  double dcg = 0.0;
  for (std::int32_t a = 1; a <= u.k; ++a)
    dcg += (std::pow(2.0, rel[static_cast<std::size_t>(a - 1)]) - 1.0) /
           std::log2(static_cast<double>(a) + 1.0);
  std::vector<int> ideal = rel;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::int32_t a = 1; a <= u.k; ++a)
    idcg += (std::pow(2.0, ideal[static_cast<std::size_t>(a - 1)]) - 1.0) /
            std::log2(static_cast<double>(a) + 1.0);
  if (idcg == 0.0) return std::nullopt;
  return dcg / idcg;
}

inline double jaccard_sets(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline std::optional<double> urd_pairs(const recaudit::UserRecord& u, const recaudit::Dataset& ds) {
  if (u.k < 2) return std::nullopt;
  const auto k = static_cast<std::size_t>(u.k);
  std::vector<std::set<std::string>> tags(k);
  for (std::size_t a = 0; a < k; ++a) {
    const auto strs = ds.tag_strings(u.candidates[a].item);
    tags[a] = {strs.begin(), strs.end()};
  }
  double sum = 0.0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) sum += jaccard_sets(tags[a], tags[b]);
  return 1.0 - sum * 2.0 / (static_cast<double>(k) * (static_cast<double>(k) - 1.0));
}

inline std::optional<double> urp_direct(const recaudit::UserRecord& u,
                                        const recaudit::Dataset& ds) {
  if (u.history.empty() || ds.total_train_interactions <= 0) return std::nullopt;
  auto rp = [&](std::int32_t item) {
    return 100.0 * static_cast<double>(ds.items[static_cast<std::size_t>(item)].train_interactions) /
           static_cast<double>(ds.total_train_interactions);
  };
  double list = 0.0;
  for (std::int32_t a = 0; a < u.k; ++a) list += rp(u.candidates[static_cast<std::size_t>(a)].item);
  list /= u.k;
  double hist = 0.0;
  for (std::int32_t h : u.history) hist += rp(h);
  hist /= static_cast<double>(u.history.size());
  return std::fabs(list - hist);
}

inline std::optional<double> metric(recaudit::MetricId m, const recaudit::UserRecord& u,
                                    const recaudit::Dataset& ds) {
  switch (m) {
    case recaudit::MetricId::auc: return auc_pairwise(u);
    case recaudit::MetricId::mrr: return mrr_scan(u);
    case recaudit::MetricId::ndcg: return ndcg_direct(u);
    case recaudit::MetricId::urd: return urd_pairs(u, ds);
    case recaudit::MetricId::urp: return urp_direct(u, ds);
  }
  return std::nullopt;
}

}  // namespace oracle
