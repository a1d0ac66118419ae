#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "recaudit/catalog.hpp"
#include "recaudit/errors.hpp"

namespace recaudit {

enum class MetricId : int { auc = 0, mrr = 1, ndcg = 2, urd = 3, urp = 4 };

inline constexpr std::array<MetricId, 5> kAllMetrics = {
    MetricId::auc, MetricId::mrr, MetricId::ndcg, MetricId::urd, MetricId::urp};

/// URP measures miscalibration, so smaller is better; the other four reward
/// ranking quality directly.
inline constexpr bool higher_is_better(MetricId m) { return m != MetricId::urp; }

inline constexpr const char* to_string(MetricId m) {
  switch (m) {
    case MetricId::auc: return "auc";
    case MetricId::mrr: return "mrr";
    case MetricId::ndcg: return "ndcg";
    case MetricId::urd: return "urd";
    case MetricId::urp: return "urp";
  }
  return "?";
}

inline std::optional<MetricId> metric_from_string(std::string_view s) {
  for (MetricId m : kAllMetrics)
    if (s == to_string(m)) return m;
  return std::nullopt;
}

inline MetricId parse_metric(std::string_view s) {
  if (auto m = metric_from_string(s)) return *m;
  throw ConfigError("unknown metric '" + std::string(s) + "'");
}

/// Per-user metric values aligned with Dataset::users; NaN marks a user the
/// metric is undefined for (excluded from group means, never imputed).
struct UserMetricTable {
  std::array<std::vector<double>, 5> values;
  std::array<std::size_t, 5> n_excluded{};
  std::size_t n_users = 0;

  const std::vector<double>& of(MetricId m) const {
    return values[static_cast<std::size_t>(m)];
  }
  std::vector<double>& of(MetricId m) { return values[static_cast<std::size_t>(m)]; }

  bool defined(MetricId m, std::size_t user) const { return !std::isnan(of(m)[user]); }
};

inline std::optional<double> try_user_auc(const UserRecord& u) {
  std::size_t n_rel = 0;
  for (const auto& c : u.candidates) n_rel += c.relevant ? 1 : 0;
  const std::size_t n_non = u.candidates.size() - n_rel;
  if (n_rel == 0 || n_non == 0) return std::nullopt;

  std::vector<std::size_t> order(u.candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return u.candidates[a].score < u.candidates[b].score;
  });
  // rank-sum with averaged tie ranks: Mann-Whitney U / (n_rel * n_non)
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && u.candidates[order[j]].score == u.candidates[order[i]].score) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (u.candidates[order[t]].relevant) rank_sum += avg_rank;
    i = j;
  }
  const double u_stat =
      rank_sum - static_cast<double>(n_rel) * (static_cast<double>(n_rel) + 1.0) / 2.0;
  return u_stat / (static_cast<double>(n_rel) * static_cast<double>(n_non));
}

inline double user_mrr(const UserRecord& u) {
  for (std::int32_t pos = 0; pos < u.k; ++pos)
    if (u.candidates[static_cast<std::size_t>(pos)].relevant) return 1.0 / (pos + 1);
  return 0.0;
}

inline std::optional<double> try_user_ndcg(const UserRecord& u) {
  std::size_t n_rel = 0;
  for (const auto& c : u.candidates) n_rel += c.relevant ? 1 : 0;
  if (n_rel == 0) return std::nullopt;
  double dcg = 0.0;
  for (std::int32_t a = 1; a <= u.k; ++a)
    if (u.candidates[static_cast<std::size_t>(a - 1)].relevant)
      dcg += 1.0 / std::log2(static_cast<double>(a) + 1.0);
  double idcg = 0.0;
  const auto ideal_len = std::min<std::size_t>(static_cast<std::size_t>(u.k), n_rel);
  for (std::size_t a = 1; a <= ideal_len; ++a)
    idcg += 1.0 / std::log2(static_cast<double>(a) + 1.0);
  return dcg / idcg;
}

/// Jaccard over interned, ascending tag-id vectors; two empty sets score 0 so
/// tagless items count as fully diverse.
inline double tag_jaccard(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::optional<double> try_user_urd(const UserRecord& u, const Dataset& ds) {
  if (u.k < 2) return std::nullopt;
  const auto k = static_cast<std::size_t>(u.k);
  double sum = 0.0;
  for (std::size_t a = 0; a + 1 < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b)
      sum += tag_jaccard(ds.items[static_cast<std::size_t>(u.candidates[a].item)].tags,
                         ds.items[static_cast<std::size_t>(u.candidates[b].item)].tags);
  return 1.0 - 2.0 * sum / (static_cast<double>(k) * (static_cast<double>(k) - 1.0));
}

inline std::optional<double> try_user_urp(const UserRecord& u, const Dataset& ds) {
  if (u.history.empty()) return std::nullopt;
  if (ds.total_train_interactions <= 0) return std::nullopt;
  double list_rp = 0.0;
  for (std::int32_t a = 0; a < u.k; ++a)
    list_rp += ds.popularity(u.candidates[static_cast<std::size_t>(a)].item);
  list_rp /= static_cast<double>(u.k);
  double hist_rp = 0.0;
  for (std::int32_t h : u.history) hist_rp += ds.popularity(h);
  hist_rp /= static_cast<double>(u.history.size());
  return std::fabs(list_rp - hist_rp);
}

inline double user_auc(const UserRecord& u) {
  if (auto v = try_user_auc(u)) return *v;
  throw UndefinedMetricError("auc undefined for user '" + u.user_id +
                             "': needs both relevant and non-relevant candidates");
}

inline double user_ndcg(const UserRecord& u) {
  if (auto v = try_user_ndcg(u)) return *v;
  throw UndefinedMetricError("ndcg undefined for user '" + u.user_id +
                             "': no relevant candidate");
}

inline double user_urd(const UserRecord& u, const Dataset& ds) {
  if (auto v = try_user_urd(u, ds)) return *v;
  throw UndefinedMetricError("urd undefined for user '" + u.user_id + "': k < 2");
}

inline double user_urp(const UserRecord& u, const Dataset& ds) {
  if (auto v = try_user_urp(u, ds)) return *v;
  throw UndefinedMetricError("urp undefined for user '" + u.user_id +
                             "': empty history or no training interactions");
}

inline std::optional<double> try_user_metric(MetricId m, const UserRecord& u, const Dataset& ds) {
  switch (m) {
    case MetricId::auc: return try_user_auc(u);
    case MetricId::mrr: return user_mrr(u);
    case MetricId::ndcg: return try_user_ndcg(u);
    case MetricId::urd: return try_user_urd(u, ds);
    case MetricId::urp: return try_user_urp(u, ds);
  }
  return std::nullopt;
}

inline UserMetricTable compute_table(const Dataset& ds) {
  UserMetricTable t;
  t.n_users = ds.users.size();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (MetricId m : kAllMetrics) t.of(m).assign(ds.users.size(), nan);
  for (std::size_t i = 0; i < ds.users.size(); ++i) {
    for (MetricId m : kAllMetrics) {
      if (auto v = try_user_metric(m, ds.users[i], ds)) {
        t.of(m)[i] = *v;
      } else {
        ++t.n_excluded[static_cast<std::size_t>(m)];
      }
    }
  }
  return t;
}

inline std::optional<double> try_group_mean(const UserMetricTable& t, MetricId m,
                                            const std::vector<std::uint32_t>& members) {
  double sum = 0.0;
  std::size_t n = 0;
  const auto& col = t.of(m);
  for (std::uint32_t u : members) {
    const double v = col[u];
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

inline double group_mean(const UserMetricTable& t, MetricId m,
                         const std::vector<std::uint32_t>& members) {
  if (auto v = try_group_mean(t, m, members)) return *v;
  throw UndefinedGroupError(std::string("group mean undefined for metric '") + to_string(m) +
                            "': every member excluded");
}

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), p);
}

inline std::string metrics_csv_string(const UserMetricTable& t, const Dataset& ds) {
  std::string s = "user_id,metric,value\n";
  for (std::size_t i = 0; i < ds.users.size(); ++i)
    for (MetricId m : kAllMetrics)
      if (t.defined(m, i)) {
        s += ds.users[i].user_id;
        s += ",";
        s += to_string(m);
        s += ",";
        s += format_double(t.of(m)[i]);
        s += "\n";
      }
  return s;
}

inline void write_metrics_csv(const UserMetricTable& t, const Dataset& ds,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write metrics file: " + path);
  out << metrics_csv_string(t, ds);
}

inline UserMetricTable load_metrics_csv(const Dataset& ds, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics file: " + path);
  std::unordered_map<std::string, std::size_t> user_of;
  for (std::size_t i = 0; i < ds.users.size(); ++i) user_of.emplace(ds.users[i].user_id, i);

  UserMetricTable t;
  t.n_users = ds.users.size();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (MetricId m : kAllMetrics) t.of(m).assign(ds.users.size(), nan);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const std::string where = "metrics line " + std::to_string(line_no);
    if (line_no == 1) {
      if (line != "user_id,metric,value")
        throw DataError(where + ": expected header 'user_id,metric,value'");
      continue;
    }
    const auto fields = detail::split(line, ',');
    if (fields.size() != 3)
      throw DataError(where + ": expected 3 fields, got " + std::to_string(fields.size()));
    auto uit = user_of.find(fields[0]);
    if (uit == user_of.end()) throw DataError(where + ": unknown user '" + fields[0] + "'");
    auto m = metric_from_string(fields[1]);
    if (!m) throw DataError(where + ": unknown metric '" + fields[1] + "'");
    double v = 0.0;
    const auto* begin = fields[2].data();
    const auto* end = begin + fields[2].size();
    auto [p, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || p != end)
      throw DataError(where + ": field 'value': not a number: '" + fields[2] + "'");
    t.of(*m)[uit->second] = v;
  }
  for (MetricId m : kAllMetrics) {
    std::size_t excl = 0;
    for (double v : t.of(m)) excl += std::isnan(v) ? 1 : 0;
    t.n_excluded[static_cast<std::size_t>(m)] = excl;
  }
  return t;
}

}  // namespace recaudit
