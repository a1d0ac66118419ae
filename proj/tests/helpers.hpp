#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "recaudit/recaudit.hpp"

// Fluent dataset builder for hand fixtures. k <= 0 means "full candidate list".
struct DsBuilder {
  recaudit::Dataset ds;
  std::unordered_map<std::string, std::int32_t> tag_map;

  DsBuilder& attr(const std::string& name, int n_values) {
    recaudit::Attribute a;
    a.name = name;
    for (int v = 0; v < n_values; ++v) a.values.push_back("v" + std::to_string(v));
    ds.schema.attributes.push_back(std::move(a));
    return *this;
  }

  DsBuilder& attr(const std::string& name, std::vector<std::string> values) {
    ds.schema.attributes.push_back({name, std::move(values)});
    return *this;
  }

  DsBuilder& item(const std::string& id, std::vector<std::string> tags, std::int64_t phi = 0) {
    recaudit::ItemRecord rec;
    rec.id = id;
    for (const auto& t : tags) rec.tags.push_back(recaudit::detail::intern_tag(ds, tag_map, t));
    std::sort(rec.tags.begin(), rec.tags.end());
    rec.tags.erase(std::unique(rec.tags.begin(), rec.tags.end()), rec.tags.end());
    rec.train_interactions = phi;
    ds.item_index.emplace(id, static_cast<std::int32_t>(ds.items.size()));
    ds.items.push_back(std::move(rec));
    return *this;
  }

  DsBuilder& total(std::int64_t t) {
    ds.total_train_interactions = t;
    ds.explicit_total = true;
    return *this;
  }

  DsBuilder& user(const std::string& id, std::vector<std::int32_t> codes, std::int32_t k = 0) {
    recaudit::UserRecord u;
    u.user_id = id;
    u.sensitive = std::move(codes);
    u.k = k;
    ds.users.push_back(std::move(u));
    return *this;
  }

  DsBuilder& cand(const std::string& item_id, double score, bool relevant) {
    ds.users.back().candidates.push_back({ds.item_idx(item_id), score, relevant});
    return *this;
  }

  DsBuilder& hist(const std::string& item_id) {
    ds.users.back().history.push_back(ds.item_idx(item_id));
    return *this;
  }

  recaudit::Dataset build() {
    recaudit::Dataset out = ds;
    for (auto& u : out.users)
      if (u.k <= 0) u.k = static_cast<std::int32_t>(u.candidates.size());
    recaudit::validate_dataset(out);
    return out;
  }
};

// Random-but-valid dataset for property tests. Tag universe t0..t9, item phi
// in [0,19] with one heavy item so |T| > 0; scores drawn from a lattice so
// ties happen unless distinct_scores is set.
inline recaudit::Dataset random_dataset(recaudit::Rng& rng, std::size_t n_users,
                                        const std::vector<int>& bounds, std::size_t n_items = 24,
                                        bool distinct_scores = false) {
  DsBuilder b;
  for (std::size_t d = 0; d < bounds.size(); ++d)
    b.attr("a" + std::to_string(d), bounds[d]);
  for (std::size_t i = 0; i < n_items; ++i) {
    std::vector<std::string> tags;
    const std::size_t n_tags = rng.below(4);  // 0..3, empties exercised
    for (std::size_t t = 0; t < n_tags; ++t)
      tags.push_back("t" + std::to_string(rng.below(10)));
    b.item("i" + std::to_string(i), tags, static_cast<std::int64_t>(rng.below(20)));
  }
  b.item("heavy", {"t0"}, 50);

  for (std::size_t u = 0; u < n_users; ++u) {
    std::vector<std::int32_t> codes;
    for (int bound : bounds)
      codes.push_back(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(bound))));
    const std::size_t n_cand = 2 + rng.below(10);
    b.user("u" + std::to_string(u), codes, static_cast<std::int32_t>(1 + rng.below(n_cand)));
    std::vector<double> scores;
    for (std::size_t c = 0; c < n_cand; ++c)
      scores.push_back(distinct_scores ? static_cast<double>(c) : static_cast<double>(rng.below(6)) * 0.5);
    if (distinct_scores) recaudit::shuffle_inplace(scores, rng);
    for (std::size_t c = 0; c < n_cand; ++c)
      b.cand("i" + std::to_string(rng.below(n_items)), scores[c], rng.uniform01() < 0.4);
    const std::size_t n_hist = rng.below(4);
    for (std::size_t h = 0; h < n_hist; ++h)
      b.hist("i" + std::to_string(rng.below(n_items)));
  }
  return b.build();
}

// One-item dataset whose group structure is given directly; per-user metric
// values are then planted into the table by hand (search tests don't care how
// a value arose).
inline recaudit::Dataset dataset_with_codes(const std::vector<std::vector<std::int32_t>>& codes,
                                            const std::vector<int>& bounds) {
  DsBuilder b;
  for (std::size_t d = 0; d < bounds.size(); ++d)
    b.attr("a" + std::to_string(d), bounds[d]);
  b.item("x", {"t"}, 1);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    b.user("u" + std::to_string(i), codes[i], 1);
    b.cand("x", 1.0, true);
  }
  return b.build();
}

inline recaudit::UserMetricTable table_of(recaudit::MetricId m, const std::vector<double>& vals) {
  recaudit::UserMetricTable t;
  t.n_users = vals.size();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (recaudit::MetricId mm : recaudit::kAllMetrics) t.of(mm).assign(vals.size(), nan);
  t.of(m) = vals;
  for (recaudit::MetricId mm : recaudit::kAllMetrics) {
    std::size_t excl = 0;
    for (double v : t.of(mm)) excl += std::isnan(v) ? 1 : 0;
    t.n_excluded[static_cast<std::size_t>(mm)] = excl;
  }
  return t;
}

inline recaudit::GroupKey key_of(std::vector<std::int32_t> v) { return {std::move(v)}; }
