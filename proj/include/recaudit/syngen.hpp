#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "recaudit/catalog.hpp"
#include "recaudit/errors.hpp"
#include "recaudit/groupspace.hpp"
#include "recaudit/metrics.hpp"
#include "recaudit/rng.hpp"
#include "recaudit/search.hpp"

namespace recaudit {

struct SynConfig {
  std::size_t n_users = 2000;
  std::vector<std::int32_t> attribute_values{8, 8, 8};  // value counts per attribute
  double skew = 1.5;        // attribute value v gets weight exp(-skew * v / (V-1))
  MetricId metric = MetricId::auc;
  double band_noise = 0.12;     // group noise as a fraction of the background band
  int plateau_radius = 2;       // Chebyshev radius of the populated slope at each extreme
  std::size_t ring_members = 4;
  std::size_t planted_members = 32;
  std::uint64_t seed = 1;
  int max_rejects = 8;
};

struct GroundTruth {
  MetricId metric = MetricId::auc;
  GroupKey best_key;
  GroupKey worst_key;
  double uf = 0.0;
  double best_mean = 0.0;
  double worst_mean = 0.0;
};

struct SynInstance {
  Dataset ds;
  GroundTruth truth;
};

namespace syn {

/// The exact per-user values a metric can take under this generator's list
/// construction, plus which grid points the planted extremes and the
/// background band sit on.
struct Grid {
  std::vector<double> points;  // ascending
  std::size_t adv_idx = 0;     // planted advantaged value
  std::size_t dis_idx = 0;     // planted disadvantaged value
  std::size_t int_lo = 0;      // background band, inclusive index range
  std::size_t int_hi = 0;
};

inline Grid grid_for(MetricId m) {
  Grid g;
  switch (m) {
    case MetricId::auc: {
      // single relevant item in a 21-item pool: auc = (#non-relevant below)/20
      for (int i = 0; i <= 20; ++i) g.points.push_back(i / 20.0);
      g.adv_idx = 16;  // 0.80
      g.dis_idx = 1;   // 0.05
      g.int_lo = 5;    // 0.25
      g.int_hi = 11;   // 0.55
      break;
    }
    case MetricId::mrr:
      // single relevant item at list position p (k=5): {0, 1/5, 1/4, 1/3, 1/2, 1}
      g.points = {0.0, 0.2, 0.25, 1.0 / 3.0, 0.5, 1.0};
      g.adv_idx = 5;
      g.dis_idx = 0;
      g.int_lo = 1;
      g.int_hi = 3;
      break;
    case MetricId::ndcg:
      // same single-relevant construction: {0, 1/log2(6), 1/log2(5), 1/log2(4), 1/log2(3), 1}
      g.points = {0.0, 1.0 / std::log2(6.0), 1.0 / std::log2(5.0), 1.0 / std::log2(4.0),
                  1.0 / std::log2(3.0), 1.0};
      g.adv_idx = 5;
      g.dis_idx = 0;
      g.int_lo = 1;
      g.int_hi = 3;
      break;
    case MetricId::urd:
      // c same-tag items in the top-5: 1 - c(c-1)/20 for c = 5..1
      g.points = {0.0, 0.4, 0.7, 0.9, 1.0};
      g.adv_idx = 4;
      g.dis_idx = 0;
      g.int_lo = 1;
      g.int_hi = 3;
      break;
    case MetricId::urp:
      // j popular-tier items in the top-5 against an unpopular history:
      // j * (1.8% - 0.2%) / 5
      for (int j = 0; j <= 5; ++j) g.points.push_back(j * 1.6 / 5.0);
      g.adv_idx = 0;  // calibrated list
      g.dis_idx = 5;  // fully popularity-skewed list
      g.int_lo = 1;
      g.int_hi = 4;
      break;
  }
  return g;
}

/// Maps a grid index to the integer the list builder needs: the position of
/// the single relevant item, the same-tag count, or the popular-tier count.
inline int realizer_param(MetricId m, std::size_t idx) {
  switch (m) {
    case MetricId::auc: return 20 - static_cast<int>(idx);
    case MetricId::mrr:
    case MetricId::ndcg: return 5 - static_cast<int>(idx);
    case MetricId::urd: return 5 - static_cast<int>(idx);
    case MetricId::urp: return static_cast<int>(idx);
  }
  return 0;
}

inline int chebyshev(const GroupKey& a, const GroupKey& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    d = std::max(d, std::abs(a.values[i] - b.values[i]));
  return d;
}

/// Potential of a key between the two planted cells, in [0,1]: high toward
/// the advantaged plant, low toward the disadvantaged one. Normalized L1, so
/// every step toward either plant moves the value a little.
inline double plant_field01(const GroupKey& k, const GroupKey& best, const GroupKey& worst,
                            const std::vector<std::int32_t>& bounds) {
  double scale = 0.0, da = 0.0, dd = 0.0;
  for (std::size_t d = 0; d < k.values.size(); ++d) {
    scale += static_cast<double>(bounds[d] - 1);
    da += std::abs(k.values[d] - best.values[d]);
    dd += std::abs(k.values[d] - worst.values[d]);
  }
  if (scale <= 0.0) return 0.5;
  return std::clamp(0.5 + (dd - da) / (2.0 * scale), 0.0, 1.0);
}

inline double key_noise01(const GroupKey& k, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (std::int32_t v : k.values) {
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = h;
  return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
}

/// Target value for one group: exact grid index for the planted pair, a
/// member split across two grid points for the guidance slope, a continuous
/// in-band value for everyone else.
struct GroupPlan {
  enum class Kind { planted, split, band };
  Kind kind = Kind::band;
  std::size_t index = 0;      // planted: the extreme grid point
  std::size_t idx_plant = 0;  // split: grid point on the plant side
  std::size_t idx_edge = 0;   // split: interior band-edge grid point
  std::size_t n_plant = 0;    // split: members realized at idx_plant
  double value = 0.0;         // band: continuous target
};

inline void all_keys_within(const GroupKey& center, int radius,
                            const std::vector<std::int32_t>& bounds,
                            std::vector<GroupKey>& out) {
  GroupKey cur = center;
  const std::size_t l = center.values.size();
  std::vector<std::int32_t> lo(l), hi(l);
  for (std::size_t d = 0; d < l; ++d) {
    lo[d] = std::max(0, center.values[d] - radius);
    hi[d] = std::min(bounds[d] - 1, center.values[d] + radius);
    cur.values[d] = lo[d];
  }
  while (true) {
    out.push_back(cur);
    std::size_t d = 0;
    while (d < l && cur.values[d] == hi[d]) {
      cur.values[d] = lo[d];
      ++d;
    }
    if (d == l) break;
    ++cur.values[d];
  }
}

/// Slope cell at chebyshev distance `dist` from a plant: members are split
/// between the plant's grid point and the interior band edge so the group
/// mean walks linearly from the plant value back to the band. With at least
/// two members the mean stays strictly outside the band and strictly short
/// of the plant, so the planted pair keeps the exact extremes.
inline GroupPlan split_plan(const Grid& g, bool adv_side, int dist, int radius,
                            std::size_t n_members) {
  GroupPlan plan;
  plan.kind = GroupPlan::Kind::split;
  plan.idx_plant = adv_side ? g.adv_idx : g.dis_idx;
  plan.idx_edge = plan.idx_plant > g.int_hi ? g.int_hi : g.int_lo;
  const double frac =
      static_cast<double>(radius + 1 - dist) / static_cast<double>(radius + 1);
  auto a = static_cast<std::size_t>(std::lround(frac * static_cast<double>(n_members)));
  plan.n_plant = n_members >= 2 ? std::clamp<std::size_t>(a, 1, n_members - 1) : 0;
  return plan;
}

struct ItemSpec {
  std::string id;
  std::string tag;
  std::int64_t phi = 10;
};

/// Fixed item catalogs. Only the planted metric's artifacts vary per user;
/// everything else is constant so the other metrics stay flat.
inline std::vector<ItemSpec> item_specs(MetricId m) {
  std::vector<ItemSpec> items;
  auto add = [&](std::string id, std::string tag, std::int64_t phi) {
    items.push_back({std::move(id), std::move(tag), phi});
  };
  switch (m) {
    case MetricId::auc:
      for (int i = 0; i < 21; ++i) add("g" + std::to_string(i), "tg" + std::to_string(i), 10);
      break;
    case MetricId::mrr:
    case MetricId::ndcg:
      for (int i = 0; i < 12; ++i) add("g" + std::to_string(i), "tg" + std::to_string(i), 10);
      break;
    case MetricId::urd:
      for (int i = 0; i < 5; ++i) add("s" + std::to_string(i), "shared", 10);
      for (int i = 0; i < 12; ++i) add("u" + std::to_string(i), "tu" + std::to_string(i), 10);
      break;
    case MetricId::urp:
      for (int i = 0; i < 5; ++i) add("h" + std::to_string(i), "th" + std::to_string(i), 180);
      for (int i = 0; i < 7; ++i) add("l" + std::to_string(i), "tl" + std::to_string(i), 20);
      add("hl0", "thl0", 20);
      add("hl1", "thl1", 20);
      break;
  }
  return items;
}

/// Builds one user's candidate list and history so the planted metric comes
/// out exactly at the grid point selected for them.
inline void build_user_lists(MetricId m, int param, const Dataset& ds, UserRecord& u) {
  auto idx_of = [&](const std::string& id) { return ds.item_index.at(id); };
  auto push = [&](const std::string& id, double score, bool relevant) {
    u.candidates.push_back({idx_of(id), score, relevant});
  };
  u.k = 5;
  switch (m) {
    case MetricId::auc: {
      for (int i = 0; i < 21; ++i)
        push("g" + std::to_string(i), 1.0 - 0.01 * i, i == param);
      break;
    }
    case MetricId::mrr:
    case MetricId::ndcg: {
      for (int i = 0; i < 12; ++i)
        push("g" + std::to_string(i), 1.0 - 0.01 * i, i == param);
      break;
    }
    case MetricId::urd: {
      const int c = param;  // same-tag items in the top-5
      int pos = 0;
      for (int i = 0; i < c; ++i, ++pos)
        push("s" + std::to_string(i), 1.0 - 0.01 * pos, pos == 0);
      for (int i = 0; pos < 12; ++i, ++pos)
        push("u" + std::to_string(i), 1.0 - 0.01 * pos, pos == 0);
      u.history.push_back(idx_of("u11"));
      break;
    }
    case MetricId::urp: {
      const int j = param;  // popular-tier items in the top-5
      int pos = 0;
      for (int i = 0; i < j; ++i, ++pos)
        push("h" + std::to_string(i), 1.0 - 0.01 * pos, pos == 0);
      for (int i = 0; i < 5 - j; ++i, ++pos)
        push("l" + std::to_string(i), 1.0 - 0.01 * pos, pos == 0);
      for (int i = j; i < 5; ++i, ++pos)
        push("h" + std::to_string(i), 1.0 - 0.01 * pos, false);
      for (int i = 5 - j; i < 7; ++i, ++pos)
        push("l" + std::to_string(i), 1.0 - 0.01 * pos, false);
      u.history.push_back(idx_of("hl0"));
      u.history.push_back(idx_of("hl1"));
      break;
    }
  }
}

inline SynInstance generate_once(const SynConfig& cfg, std::uint64_t seed) {
  if (cfg.attribute_values.empty()) throw ConfigError("syngen: no attributes configured");
  for (std::int32_t v : cfg.attribute_values)
    if (v < 1) throw ConfigError("syngen: attribute value counts must be >= 1");
  if (cfg.n_users < 4 * (cfg.planted_members + 1))
    throw ConfigError("syngen: n_users too small for the planted group sizes");

  SynInstance inst;
  Dataset& ds = inst.ds;

  const std::size_t l = cfg.attribute_values.size();
  for (std::size_t d = 0; d < l; ++d) {
    Attribute a;
    a.name = "a" + std::to_string(d);
    for (std::int32_t v = 0; v < cfg.attribute_values[d]; ++v)
      a.values.push_back("v" + std::to_string(v));
    ds.schema.attributes.push_back(std::move(a));
  }

  const Grid grid = grid_for(cfg.metric);
  for (const ItemSpec& s : item_specs(cfg.metric)) {
    ItemRecord rec;
    rec.id = s.id;
    rec.train_interactions = s.phi;
    ds.item_index.emplace(rec.id, static_cast<std::int32_t>(ds.items.size()));
    auto it = std::find(ds.tag_vocab.begin(), ds.tag_vocab.end(), s.tag);
    if (it == ds.tag_vocab.end()) {
      rec.tags.push_back(static_cast<std::int32_t>(ds.tag_vocab.size()));
      ds.tag_vocab.push_back(s.tag);
    } else {
      rec.tags.push_back(static_cast<std::int32_t>(it - ds.tag_vocab.begin()));
    }
    ds.items.push_back(std::move(rec));
  }
  if (cfg.metric == MetricId::urp) {
    ds.total_train_interactions = 10000;
    ds.explicit_total = true;
  }

  // skewed per-attribute sampling distributions
  Rng master = Rng::from(seed, 0x73796e67ULL);
  std::vector<std::vector<double>> cdf(l);
  for (std::size_t d = 0; d < l; ++d) {
    const auto nv = static_cast<std::size_t>(cfg.attribute_values[d]);
    std::vector<double> w(nv);
    double total = 0.0;
    for (std::size_t v = 0; v < nv; ++v) {
      w[v] = nv == 1 ? 1.0
                     : std::exp(-cfg.skew * static_cast<double>(v) /
                                static_cast<double>(nv - 1));
      total += w[v];
    }
    cdf[d].resize(nv);
    double acc = 0.0;
    for (std::size_t v = 0; v < nv; ++v) {
      acc += w[v] / total;
      cdf[d][v] = acc;
    }
    cdf[d].back() = 1.0;
  }

  std::vector<GroupKey> user_keys(cfg.n_users);
  std::unordered_map<GroupKey, std::size_t, GroupKeyHash> group_count;
  for (std::size_t i = 0; i < cfg.n_users; ++i) {
    GroupKey k;
    k.values.reserve(l);
    for (std::size_t d = 0; d < l; ++d)
      k.values.push_back(static_cast<std::int32_t>(master.categorical(cdf[d])));
    ++group_count[k];
    user_keys[i] = std::move(k);
  }

  // planted extremes: two separated keys sampled from the same attribute
  // distribution as the users, so both sit in believably populated territory
  GroupKey best_key, worst_key;
  {
    auto draw_key = [&] {
      GroupKey k;
      k.values.reserve(l);
      for (std::size_t d = 0; d < l; ++d)
        k.values.push_back(static_cast<std::int32_t>(master.categorical(cdf[d])));
      return k;
    };
    int max_sep = 0;
    for (std::size_t d = 0; d < l; ++d)
      max_sep = std::max(max_sep, cfg.attribute_values[d] - 1);
    // plateaus must not overlap, or a cell could serve two masters
    const int min_sep = std::min(2 * cfg.plateau_radius + 2, max_sep);
    best_key = draw_key();
    worst_key = best_key;
    int best_sep = 0;
    for (int attempt = 0; attempt < 64 && best_sep < min_sep; ++attempt) {
      GroupKey cand = draw_key();
      if (const int sep = chebyshev(cand, best_key); sep > best_sep) {
        best_sep = sep;
        worst_key = std::move(cand);
      }
    }
  }
  if (best_key == worst_key) throw DataError("syngen: degenerate group space");

  // populate the planted groups and the slope around them
  std::vector<std::pair<GroupKey, std::size_t>> force_list;
  force_list.emplace_back(best_key, cfg.planted_members);
  force_list.emplace_back(worst_key, cfg.planted_members);
  std::unordered_set<GroupKey, GroupKeyHash> forced_keys{best_key, worst_key};
  for (const GroupKey& center : {best_key, worst_key}) {
    std::vector<GroupKey> ring;
    all_keys_within(center, cfg.plateau_radius, cfg.attribute_values, ring);
    std::sort(ring.begin(), ring.end());
    for (GroupKey& k : ring)
      if (forced_keys.insert(k).second) force_list.emplace_back(std::move(k), cfg.ring_members);
  }

  std::size_t donor = 0;
  for (const auto& [key, want] : force_list) {
    while (group_count[key] < want) {
      while (donor < cfg.n_users && forced_keys.count(user_keys[donor])) ++donor;
      if (donor >= cfg.n_users)
        throw DataError("syngen: not enough users to populate the planted groups");
      auto old = group_count.find(user_keys[donor]);
      if (--old->second == 0) group_count.erase(old);
      user_keys[donor] = key;
      ++group_count[key];
      ++donor;
    }
  }

  // per-group target values
  std::unordered_map<GroupKey, GroupPlan, GroupKeyHash> plans;
  const double band_lo = grid.points[grid.int_lo];
  const double band_hi = grid.points[grid.int_hi];
  const bool adv_is_high = grid.adv_idx > grid.dis_idx;
  for (const auto& [k, cnt] : group_count) {
    GroupPlan plan;
    if (k == best_key) {
      plan.kind = GroupPlan::Kind::planted;
      plan.index = grid.adv_idx;
    } else if (k == worst_key) {
      plan.kind = GroupPlan::Kind::planted;
      plan.index = grid.dis_idx;
    } else if (const int da = chebyshev(k, best_key); da <= cfg.plateau_radius) {
      plan = split_plan(grid, true, da, cfg.plateau_radius, cnt);
    } else if (const int dd = chebyshev(k, worst_key); dd <= cfg.plateau_radius) {
      plan = split_plan(grid, false, dd, cfg.plateau_radius, cnt);
    } else {
      const double f = plant_field01(k, best_key, worst_key, cfg.attribute_values);
      const double along = adv_is_high ? f : 1.0 - f;
      double v = band_lo + along * (band_hi - band_lo);
      v += (2.0 * key_noise01(k, seed) - 1.0) * cfg.band_noise * (band_hi - band_lo);
      plan.value = std::clamp(v, band_lo, band_hi);
    }
    plans.emplace(k, plan);
  }

  // realize each user's lists; off-grid band targets round stochastically to
  // the two adjacent achievable values, staying inside the band
  Rng round_rng = Rng::from(seed, 0x726f756eULL);
  ds.users.resize(cfg.n_users);
  for (std::size_t i = 0; i < cfg.n_users; ++i) {
    GroupPlan& plan = plans.at(user_keys[i]);
    std::size_t idx = 0;
    switch (plan.kind) {
      case GroupPlan::Kind::planted:
        idx = plan.index;
        break;
      case GroupPlan::Kind::split:
        if (plan.n_plant > 0) {
          idx = plan.idx_plant;
          --plan.n_plant;
        } else {
          idx = plan.idx_edge;
        }
        break;
      case GroupPlan::Kind::band: {
        std::size_t hi = grid.int_lo;
        while (hi < grid.int_hi && grid.points[hi] < plan.value) ++hi;
        const std::size_t lo = hi > grid.int_lo ? hi - 1 : hi;
        if (lo == hi || plan.value <= grid.points[lo]) {
          idx = lo;
          round_rng.uniform01();  // fixed draw count per user
        } else {
          const double p_hi =
              (plan.value - grid.points[lo]) / (grid.points[hi] - grid.points[lo]);
          idx = round_rng.uniform01() < p_hi ? hi : lo;
        }
        break;
      }
    }
    UserRecord& u = ds.users[i];
    u.user_id = "u" + std::to_string(i);
    u.sensitive.assign(user_keys[i].values.begin(), user_keys[i].values.end());
    build_user_lists(cfg.metric, realizer_param(cfg.metric, idx), ds, u);
  }

  validate_dataset(ds);

  inst.truth.metric = cfg.metric;
  inst.truth.best_key = best_key;
  inst.truth.worst_key = worst_key;
  return inst;
}

}  // namespace syn

/// Generates a planted instance and proves it against the exhaustive engine;
/// the emitted ground truth is the oracle's own answer. Rejected draws (the
/// planted pair not strictly optimal, or a placement the population can't
/// support) re-seed and retry.
inline SynInstance generate(const SynConfig& cfg) {
  std::uint64_t seed = cfg.seed;
  for (int attempt = 0; attempt <= cfg.max_rejects; ++attempt) {
    SynInstance inst;
    try {
      inst = syn::generate_once(cfg, seed);
    } catch (const DataError&) {
      seed = splitmix64(seed);
      continue;
    }
    const UserMetricTable table = compute_table(inst.ds);
    const GroupIndex idx = build_index_all(inst.ds);
    SearchResult oracle;
    try {
      oracle = brute_force_search(idx, table, cfg.metric, SizeFilter{});
    } catch (const SearchError&) {
      seed = splitmix64(seed);
      continue;
    }
    if (oracle.best.key == inst.truth.best_key && oracle.worst.key == inst.truth.worst_key) {
      inst.truth.uf = oracle.uf;
      inst.truth.best_mean = oracle.best.mean;
      inst.truth.worst_mean = oracle.worst.mean;
      return inst;
    }
    seed = splitmix64(seed);
  }
  throw DataError("syngen: rejection limit exceeded; planted pair never strictly optimal");
}

inline void write_ground_truth(const GroundTruth& t, const std::string& path) {
  nlohmann::json j;
  j["metric"] = to_string(t.metric);
  j["best_key"] = t.best_key.values;
  j["worst_key"] = t.worst_key.values;
  j["uf"] = t.uf;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ground truth file: " + path);
  out << j.dump(2) << "\n";
}

inline GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground truth file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("ground truth: invalid JSON: " + std::string(e.what()));
  }
  GroundTruth t;
  t.metric = parse_metric(j.at("metric").get<std::string>());
  for (const auto& v : j.at("best_key")) t.best_key.values.push_back(v.get<std::int32_t>());
  for (const auto& v : j.at("worst_key")) t.worst_key.values.push_back(v.get<std::int32_t>());
  t.uf = j.at("uf").get<double>();
  return t;
}

inline void write_instance(const SynInstance& inst, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir);
  save_dataset(inst.ds, (base / "users.jsonl").string(), (base / "items.csv").string(),
               (base / "schema.json").string());
  write_ground_truth(inst.truth, (base / "ground_truth.json").string());
}

}  // namespace recaudit
