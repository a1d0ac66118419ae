#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "helpers.hpp"

using namespace recaudit;
namespace fs = std::filesystem;

namespace {

SynConfig small_cfg(MetricId m, std::uint64_t seed) {
  SynConfig cfg;
  cfg.metric = m;
  cfg.n_users = 160;
  cfg.attribute_values = {4, 4};
  cfg.planted_members = 16;
  cfg.ring_members = 2;
  cfg.plateau_radius = 1;
  cfg.seed = seed;
  return cfg;
}

// one user realized at a given grid parameter, over the generator's catalog
Dataset grid_probe(MetricId m, int param) {
  DsBuilder b;
  b.attr("g", 2);
  for (const auto& s : syn::item_specs(m)) b.item(s.id, {s.tag}, s.phi);
  if (m == MetricId::urp) b.total(10000);
  UserRecord u;
  u.user_id = "probe";
  u.sensitive = {0};
  syn::build_user_lists(m, param, b.ds, u);
  b.ds.users.push_back(std::move(u));
  return b.build();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("the list builder realizes every grid point exactly") {
  for (MetricId m : kAllMetrics) {
    const syn::Grid g = syn::grid_for(m);
    REQUIRE(g.adv_idx < g.points.size());
    REQUIRE(g.dis_idx < g.points.size());
    REQUIRE(g.int_lo <= g.int_hi);
    REQUIRE(g.int_hi < g.points.size());
    for (std::size_t i = 1; i < g.points.size(); ++i) REQUIRE(g.points[i] > g.points[i - 1]);
    for (std::size_t idx = 0; idx < g.points.size(); ++idx) {
      const Dataset ds = grid_probe(m, syn::realizer_param(m, idx));
      const auto v = try_user_metric(m, ds.users[0], ds);
      REQUIRE(v.has_value());
      REQUIRE_THAT(*v, Catch::Matchers::WithinAbs(g.points[idx], 1e-12));
    }
  }
}

TEST_CASE("planted extremes sit strictly outside the background band") {
  for (MetricId m : kAllMetrics) {
    const syn::Grid g = syn::grid_for(m);
    const bool adv_high = higher_is_better(m);
    if (adv_high) {
      REQUIRE(g.adv_idx > g.int_hi);
      REQUIRE(g.dis_idx < g.int_lo);
    } else {
      REQUIRE(g.adv_idx < g.int_lo);
      REQUIRE(g.dis_idx > g.int_hi);
    }
  }
}

TEST_CASE("geometry helpers") {
  REQUIRE(syn::chebyshev(key_of({0, 0}), key_of({2, 3})) == 3);
  REQUIRE(syn::chebyshev(key_of({5}), key_of({5})) == 0);
  const GroupKey adv = key_of({3, 3});
  const GroupKey dis = key_of({0, 0});
  REQUIRE(syn::plant_field01(adv, adv, dis, {4, 4}) == 1.0);
  REQUIRE(syn::plant_field01(dis, adv, dis, {4, 4}) == 0.0);
  // equidistant keys sit mid-band
  REQUIRE_THAT(syn::plant_field01(key_of({3, 0}), adv, dis, {4, 4}),
               Catch::Matchers::WithinAbs(0.5, 1e-15));
  // each step toward a plant moves the field
  REQUIRE(syn::plant_field01(key_of({2, 3}), adv, dis, {4, 4}) >
          syn::plant_field01(key_of({1, 3}), adv, dis, {4, 4}));
  // degenerate one-cell space falls back to the middle
  REQUIRE(syn::plant_field01(key_of({0}), key_of({0}), key_of({0}), {1}) == 0.5);

  std::vector<GroupKey> ring;
  syn::all_keys_within(key_of({1, 1}), 1, {4, 4}, ring);
  REQUIRE(ring.size() == 9);
  ring.clear();
  syn::all_keys_within(key_of({0, 0}), 2, {4, 4}, ring);
  REQUIRE(ring.size() == 9);  // clipped at the walls

  const syn::Grid g = syn::grid_for(MetricId::auc);
  const syn::GroupPlan near_a = syn::split_plan(g, true, 1, 3, 4);
  REQUIRE(near_a.kind == syn::GroupPlan::Kind::split);
  REQUIRE(near_a.idx_plant == 16);
  REQUIRE(near_a.idx_edge == 11);  // interior band edge on the high side
  REQUIRE(near_a.n_plant == 3);    // 3/4 of members at the plant value
  REQUIRE(syn::split_plan(g, true, 3, 3, 4).n_plant == 1);  // outermost ring
  const syn::GroupPlan near_d = syn::split_plan(g, false, 1, 3, 4);
  REQUIRE(near_d.idx_plant == 1);
  REQUIRE(near_d.idx_edge == 5);
  REQUIRE(near_d.n_plant == 3);
  // always keep one member off the plant so the mean stays strictly short
  REQUIRE(syn::split_plan(g, true, 1, 9, 4).n_plant == 3);
  // a lone member can't split; it sits at the band edge
  REQUIRE(syn::split_plan(g, true, 1, 3, 1).n_plant == 0);
  // low-is-advantaged grid picks the low band edge for the advantaged ring
  const syn::Grid gu = syn::grid_for(MetricId::urp);
  REQUIRE(syn::split_plan(gu, true, 1, 3, 4).idx_plant == 0);
  REQUIRE(syn::split_plan(gu, true, 1, 3, 4).idx_edge == 1);
}

TEST_CASE("key noise is deterministic and fair-ish") {
  const double a = syn::key_noise01(key_of({1, 2}), 7);
  REQUIRE(a == syn::key_noise01(key_of({1, 2}), 7));
  REQUIRE(a != syn::key_noise01(key_of({2, 1}), 7));
  REQUIRE(a != syn::key_noise01(key_of({1, 2}), 8));
  REQUIRE(a >= 0.0);
  REQUIRE(a < 1.0);
}

TEST_CASE("generated instances match the exhaustive oracle exactly") {
  for (MetricId m : kAllMetrics) {
    const SynInstance inst = generate(small_cfg(m, 3));
    const UserMetricTable table = compute_table(inst.ds);
    const GroupIndex idx = build_index_all(inst.ds);
    const SearchResult oracle = brute_force_search(idx, table, m, SizeFilter{});
    REQUIRE(oracle.best.key == inst.truth.best_key);
    REQUIRE(oracle.worst.key == inst.truth.worst_key);
    REQUIRE(oracle.uf == inst.truth.uf);
    REQUIRE(oracle.best.mean == inst.truth.best_mean);
    REQUIRE(oracle.worst.mean == inst.truth.worst_mean);

    // the planted pair is strictly optimal: everything else is interior
    for (const GroupStat& s : oracle.evaluated) {
      if (s.key == inst.truth.best_key || s.key == inst.truth.worst_key) continue;
      if (higher_is_better(m)) {
        REQUIRE(s.mean < inst.truth.best_mean);
        REQUIRE(s.mean > inst.truth.worst_mean);
      } else {
        REQUIRE(s.mean > inst.truth.best_mean);
        REQUIRE(s.mean < inst.truth.worst_mean);
      }
    }

    // planted groups got their forced membership
    REQUIRE(idx.group_size(inst.truth.best_key) >= 16);
    REQUIRE(idx.group_size(inst.truth.worst_key) >= 16);

    // every realized value sits on the metric's achievable grid
    const syn::Grid g = syn::grid_for(m);
    for (std::size_t i = 0; i < inst.ds.users.size(); ++i) {
      REQUIRE(table.defined(m, i));
      const double v = table.of(m)[i];
      bool on_grid = false;
      for (double p : g.points) on_grid |= std::fabs(v - p) <= 1e-12;
      REQUIRE(on_grid);
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const SynConfig cfg = small_cfg(MetricId::auc, 9);
  const SynInstance a = generate(cfg);
  const SynInstance b = generate(cfg);
  REQUIRE(dataset_equal(a.ds, b.ds));
  REQUIRE(a.truth.best_key == b.truth.best_key);
  REQUIRE(a.truth.uf == b.truth.uf);

  const SynInstance c = generate(small_cfg(MetricId::auc, 10));
  const bool same = dataset_equal(a.ds, c.ds);
  REQUIRE_FALSE(same);
}

TEST_CASE("the sampled population is skewed toward low codes") {
  const SynInstance inst = generate(small_cfg(MetricId::mrr, 4));
  std::vector<std::size_t> low(2, 0), high(2, 0);
  for (const auto& u : inst.ds.users)
    for (std::size_t d = 0; d < 2; ++d) {
      low[d] += u.sensitive[d] == 0 ? 1 : 0;
      high[d] += u.sensitive[d] == 3 ? 1 : 0;
    }
  for (std::size_t d = 0; d < 2; ++d) REQUIRE(low[d] > high[d]);
}

TEST_CASE("instances survive a full write/load round trip") {
  const SynInstance inst = generate(small_cfg(MetricId::urp, 5));
  const fs::path dir =
      fs::temp_directory_path() / ("recaudit_syngen_" + std::to_string(::getpid()));
  write_instance(inst, dir.string());
  const Dataset back = load_dataset((dir / "users.jsonl").string(), (dir / "items.csv").string(),
                                    (dir / "schema.json").string());
  REQUIRE(dataset_equal(inst.ds, back));
  const GroundTruth t = load_ground_truth((dir / "ground_truth.json").string());
  REQUIRE(t.metric == inst.truth.metric);
  REQUIRE(t.best_key == inst.truth.best_key);
  REQUIRE(t.worst_key == inst.truth.worst_key);
  REQUIRE(t.uf == inst.truth.uf);

  // byte-level determinism of the serialized instance
  const fs::path dir2 = fs::path(dir.string() + "_b");
  write_instance(generate(small_cfg(MetricId::urp, 5)), dir2.string());
  for (const char* f : {"users.jsonl", "items.csv", "schema.json", "ground_truth.json"})
    REQUIRE(slurp((dir / f).string()) == slurp((dir2 / f).string()));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("explicit interaction total only for the popularity metric") {
  const SynInstance urp = generate(small_cfg(MetricId::urp, 6));
  REQUIRE(urp.ds.explicit_total);
  REQUIRE(urp.ds.total_train_interactions == 10000);
  const SynInstance auc = generate(small_cfg(MetricId::auc, 6));
  REQUIRE_FALSE(auc.ds.explicit_total);
}

TEST_CASE("generator configuration guards") {
  SynConfig no_attrs = small_cfg(MetricId::auc, 1);
  no_attrs.attribute_values.clear();
  REQUIRE_THROWS_AS(generate(no_attrs), ConfigError);

  SynConfig bad_counts = small_cfg(MetricId::auc, 1);
  bad_counts.attribute_values = {4, 0};
  REQUIRE_THROWS_AS(generate(bad_counts), ConfigError);

  SynConfig too_few = small_cfg(MetricId::auc, 1);
  too_few.n_users = 10;
  REQUIRE_THROWS_AS(generate(too_few), ConfigError);

  SynConfig degenerate = small_cfg(MetricId::auc, 1);
  degenerate.attribute_values = {1};
  degenerate.n_users = 160;
  REQUIRE_THROWS_AS(generate(degenerate), DataError);
}
