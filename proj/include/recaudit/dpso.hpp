#pragma once

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "recaudit/errors.hpp"
#include "recaudit/groupspace.hpp"
#include "recaudit/metrics.hpp"
#include "recaudit/rng.hpp"
#include "recaudit/search.hpp"

namespace recaudit {

struct SwarmConfig {
  double alpha = 0.09;
  double c1 = 2.0;
  double c2 = 2.0;
  double v_star = 2.0;
  std::size_t n_particles = 0;  // 0: derived as ceil(epsilon * group-space size)
  double epsilon = 0.0;         // 0: 0.005 on spaces > 1000 groups, 0.2 otherwise
  int n_iterations = -1;        // <0: 20 on spaces > 1000 groups, 10 otherwise
  std::uint64_t seed = 0;
  bool stagnation_resample = true;
  enum class Init { distribution, uniform } init = Init::distribution;
};

inline SwarmConfig resolve_swarm_config(SwarmConfig cfg, std::uint64_t space_size) {
  const bool large = space_size > 1000;
  if (cfg.epsilon <= 0.0) cfg.epsilon = large ? 0.005 : 0.2;
  if (cfg.n_particles == 0)
    cfg.n_particles = static_cast<std::size_t>(
        std::max(1.0, std::ceil(cfg.epsilon * static_cast<double>(space_size))));
  if (cfg.n_iterations < 0) cfg.n_iterations = large ? 20 : 10;
  if (!(cfg.alpha >= 0.0) || !std::isfinite(cfg.alpha)) throw ConfigError("alpha must be >= 0");
  if (cfg.c1 < 0.0 || cfg.c2 < 0.0) throw ConfigError("c1 and c2 must be >= 0");
  if (!(cfg.v_star > 0.0)) throw ConfigError("vstar must be > 0");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  return cfg;
}

struct InfoEntry {
  double fitness = std::numeric_limits<double>::quiet_NaN();
  std::size_t size = 0;
  bool defined = false;
  std::uint32_t evals = 0;  // times the fitness was actually computed (memo contract: 1)
};

/// Shared memo of visited groups. Both swarms read and write the same
/// instance, so a key costs one group-mean computation per run no matter how
/// many particles land on it.
class InfoBase {
 public:
  InfoBase() = default;
  explicit InfoBase(MetricId metric) : metric_(metric) {}

  const InfoEntry* lookup(const GroupKey& k) {
    auto it = map_.find(k);
    if (it == map_.end()) return nullptr;
    ++hits_;
    return &it->second;
  }

  const InfoEntry& insert(const GroupKey& k, InfoEntry e) {
    auto [it, fresh] = map_.emplace(k, e);
    assert(fresh && "InfoBase key evaluated twice");
    (void)fresh;
    ++insertions_;
    if (e.defined) note_defined(k, e);
    return it->second;
  }

  std::size_t size() const { return map_.size(); }
  std::size_t insertions() const { return insertions_; }
  std::size_t hits() const { return hits_; }
  bool any_defined() const { return any_defined_; }
  const GroupStat& best_advantaged() const { return adv_; }
  const GroupStat& best_disadvantaged() const { return dis_; }

  std::vector<GroupStat> defined_stats() const {
    std::vector<GroupStat> out;
    for (const auto& [k, e] : map_)
      if (e.defined) out.push_back({k, e.fitness, e.size});
    std::sort(out.begin(), out.end(),
              [](const GroupStat& a, const GroupStat& b) { return a.key < b.key; });
    return out;
  }

  const std::unordered_map<GroupKey, InfoEntry, GroupKeyHash>& entries() const { return map_; }

 private:
  void note_defined(const GroupKey& k, const InfoEntry& e) {
    const GroupStat s{k, e.fitness, e.size};
    if (!any_defined_) {
      adv_ = dis_ = s;
      any_defined_ = true;
      return;
    }
    if (more_advantaged(metric_, s, adv_)) adv_ = s;
    if (more_disadvantaged(metric_, s, dis_)) dis_ = s;
  }

  MetricId metric_ = MetricId::auc;
  std::unordered_map<GroupKey, InfoEntry, GroupKeyHash> map_;
  std::size_t insertions_ = 0;
  std::size_t hits_ = 0;
  bool any_defined_ = false;
  GroupStat adv_;
  GroupStat dis_;
};

enum class SwarmTag { advantaged, disadvantaged };

/// True when fitness x beats y in this swarm's search direction.
inline bool fitness_better(MetricId m, SwarmTag tag, double x, double y) {
  const bool maximize = (tag == SwarmTag::advantaged) == higher_is_better(m);
  return maximize ? x > y : x < y;
}

struct Particle {
  GroupKey position;
  std::vector<double> velocity;
  GroupKey pbest_key;
  double pbest_fitness = std::numeric_limits<double>::quiet_NaN();
  bool pbest_defined = false;
  int undefined_streak = 0;
  Rng rng;
};

struct Swarm {
  SwarmTag tag = SwarmTag::advantaged;
  std::vector<Particle> particles;
};

struct TraceRecord {
  int iteration = 0;
  double gbest_a = std::numeric_limits<double>::quiet_NaN();
  double gbest_d = std::numeric_limits<double>::quiet_NaN();
  bool a_defined = false;
  bool d_defined = false;
  std::size_t infobase_size = 0;
};

struct DpsoOutcome {
  SearchResult result;
  std::vector<TraceRecord> trace;
  std::size_t fitness_evaluations = 0;  // InfoBase insertions
  std::size_t infobase_hits = 0;
  double init_nonempty_hit_rate = 0.0;
  SwarmConfig resolved;
  InfoBase infobase;  // final memo state, for inspection
};

namespace detail {

inline void seed_particle(Particle& p, const GroupIndex& idx, const SwarmConfig& cfg) {
  p.position = cfg.init == SwarmConfig::Init::uniform ? uniform_key(idx, p.rng)
                                                      : sample_key(idx, p.rng);
  p.velocity.resize(idx.n_dims());
  for (std::size_t d = 0; d < idx.n_dims(); ++d)
    p.velocity[d] = p.rng.uniform(-cfg.v_star, cfg.v_star);
}

inline std::vector<double> pbest_centroid(const Swarm& s) {
  std::vector<double> c(s.particles.front().position.values.size(), 0.0);
  for (const Particle& p : s.particles)
    for (std::size_t d = 0; d < c.size(); ++d)
      c[d] += static_cast<double>(p.pbest_key.values[d]);
  for (double& v : c) v /= static_cast<double>(s.particles.size());
  return c;
}

}  // namespace detail

/// Builds the two swarms with positions drawn from the empirical attribute
/// distribution (or uniformly, for the baseline initializer) and velocities
/// uniform in [-v*, v*]. Each particle owns an independent derived stream.
inline std::pair<Swarm, Swarm> initialize_swarms(const GroupIndex& idx, const SwarmConfig& cfg) {
  Rng master = Rng::from(cfg.seed, 0x6470736fULL);
  Swarm a, d;
  a.tag = SwarmTag::advantaged;
  d.tag = SwarmTag::disadvantaged;
  a.particles.resize(cfg.n_particles);
  d.particles.resize(cfg.n_particles);
  for (std::size_t i = 0; i < cfg.n_particles; ++i) {
    a.particles[i].rng = master.derive(i);
    detail::seed_particle(a.particles[i], idx, cfg);
    a.particles[i].pbest_key = a.particles[i].position;
  }
  for (std::size_t i = 0; i < cfg.n_particles; ++i) {
    d.particles[i].rng = master.derive(cfg.n_particles + i);
    detail::seed_particle(d.particles[i], idx, cfg);
    d.particles[i].pbest_key = d.particles[i].position;
  }
  return {std::move(a), std::move(d)};
}

/// One velocity update: thermal term pulling toward the swarm centroid plus
/// the usual cognitive/social attractors, clamped per coordinate.
inline void velocity_update(Particle& p, const std::vector<double>& centroid,
                            const GroupKey* gbest, const SwarmConfig& cfg) {
  const double r1 = p.rng.uniform01();
  const double r2 = p.rng.uniform01();
  for (std::size_t d = 0; d < p.velocity.size(); ++d) {
    const double pos = static_cast<double>(p.position.values[d]);
    const double phi = p.rng.normal();
    double v = cfg.alpha * std::fabs(centroid[d] - pos) * phi;
    v += cfg.c1 * r1 * (static_cast<double>(p.pbest_key.values[d]) - pos);
    if (gbest) v += cfg.c2 * r2 * (static_cast<double>(gbest->values[d]) - pos);
    p.velocity[d] = std::clamp(v, -cfg.v_star, cfg.v_star);
  }
}

/// Round-and-clamp discretization of position + velocity.
inline void position_update(Particle& p, const GroupIndex& idx) {
  for (std::size_t d = 0; d < p.velocity.size(); ++d) {
    const double moved = static_cast<double>(p.position.values[d]) + p.velocity[d];
    auto code = static_cast<std::int32_t>(std::lround(moved));
    code = std::clamp(code, 0, idx.boundary[d] - 1);
    p.position.values[d] = code;
  }
  assert(idx.in_boundary(p.position));
}

inline DpsoOutcome run_dpso_detailed(const GroupIndex& idx, const UserMetricTable& table,
                                     MetricId metric, const SizeFilter& filter,
                                     const SwarmConfig& raw_cfg,
                                     const BudgetOptions& budget = {}, std::size_t top_n = 10) {
  const auto t0 = std::chrono::steady_clock::now();
  const SwarmConfig cfg = resolve_swarm_config(raw_cfg, idx.space_size());
  const std::size_t min_count = filter.min_count(idx.n_users);

  DpsoOutcome out;
  out.resolved = cfg;
  auto [swarm_a, swarm_d] = initialize_swarms(idx, cfg);
  Swarm* swarms[2] = {&swarm_a, &swarm_d};

  std::size_t nonempty = 0;
  for (const Swarm* s : swarms)
    for (const Particle& p : s->particles)
      if (idx.find(p.position)) ++nonempty;
  out.init_nonempty_hit_rate =
      static_cast<double>(nonempty) / static_cast<double>(2 * cfg.n_particles);

  InfoBase ib(metric);
  bool truncated = false;

  auto over_budget = [&] {
    return budget.enabled && detail::elapsed_s(t0) >= budget.seconds;
  };

  auto evaluate_at = [&](const GroupKey& k) -> const InfoEntry& {
    if (const InfoEntry* e = ib.lookup(k)) return *e;
    InfoEntry e;
    e.evals = 1;
    if (const auto* members = idx.find(k); members && members->size() >= min_count) {
      e.size = members->size();
      if (auto mean = try_group_mean(table, metric, *members)) {
        e.fitness = *mean;
        e.defined = true;
      }
    }
    return ib.insert(k, e);
  };

  auto settle = [&](Swarm& s, Particle& p) {
    const InfoEntry& e = evaluate_at(p.position);
    if (e.defined) {
      p.undefined_streak = 0;
      if (!p.pbest_defined || fitness_better(metric, s.tag, e.fitness, p.pbest_fitness)) {
        p.pbest_key = p.position;
        p.pbest_fitness = e.fitness;
        p.pbest_defined = true;
      }
    } else if (++p.undefined_streak >= 3 && cfg.stagnation_resample) {
      // stranded off-population for 3 straight evaluations: draw a fresh start
      detail::seed_particle(p, idx, cfg);
      p.undefined_streak = 0;
    }
  };

  auto record_trace = [&](int iteration) {
    TraceRecord r;
    r.iteration = iteration;
    r.infobase_size = ib.size();
    if (ib.any_defined()) {
      r.gbest_a = ib.best_advantaged().mean;
      r.gbest_d = ib.best_disadvantaged().mean;
      r.a_defined = r.d_defined = true;
    }
    out.trace.push_back(r);
  };

  for (Swarm* s : swarms) {
    for (Particle& p : s->particles) {
      if (over_budget()) {
        truncated = true;
        break;
      }
      settle(*s, p);
    }
    if (truncated) break;
  }
  record_trace(0);

  for (int it = 1; it <= cfg.n_iterations && !truncated; ++it) {
    const bool have_gbest = ib.any_defined();
    const GroupKey gbest_a = have_gbest ? ib.best_advantaged().key : GroupKey{};
    const GroupKey gbest_d = have_gbest ? ib.best_disadvantaged().key : GroupKey{};
    for (Swarm* s : swarms) {
      const std::vector<double> centroid = detail::pbest_centroid(*s);
      const GroupKey* gbest =
          have_gbest ? (s->tag == SwarmTag::advantaged ? &gbest_a : &gbest_d) : nullptr;
      for (Particle& p : s->particles) {
        if (over_budget()) {
          truncated = true;
          break;
        }
        velocity_update(p, centroid, gbest, cfg);
        position_update(p, idx);
        settle(*s, p);
      }
      if (truncated) break;
    }
    record_trace(it);
  }

  if (!ib.any_defined())
    throw SearchError("dpso: no group with defined fitness was ever visited");

  SearchResult& res = out.result;
  res.truncated = truncated;
  res.groups_evaluated = ib.insertions();
  detail::finalize_result(res, metric, ib.defined_stats(), top_n, "dpso", 1);
  res.wall_time_s = detail::elapsed_s(t0);
  out.fitness_evaluations = ib.insertions();
  out.infobase_hits = ib.hits();
  out.infobase = std::move(ib);
  return out;
}

inline SearchResult run_dpso(const GroupIndex& idx, const UserMetricTable& table, MetricId metric,
                             const SizeFilter& filter, const SwarmConfig& cfg,
                             const BudgetOptions& budget = {}, std::size_t top_n = 10) {
  return run_dpso_detailed(idx, table, metric, filter, cfg, budget, top_n).result;
}

}  // namespace recaudit
