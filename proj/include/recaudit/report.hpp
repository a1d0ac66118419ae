#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "recaudit/catalog.hpp"
#include "recaudit/dpso.hpp"
#include "recaudit/errors.hpp"
#include "recaudit/groupspace.hpp"
#include "recaudit/metrics.hpp"
#include "recaudit/mitigation.hpp"
#include "recaudit/search.hpp"

namespace recaudit {

enum class EngineKind { brute, threshold, dpso };

inline constexpr const char* to_string(EngineKind e) {
  switch (e) {
    case EngineKind::brute: return "brute";
    case EngineKind::threshold: return "threshold";
    case EngineKind::dpso: return "dpso";
  }
  return "?";
}

inline EngineKind parse_engine(const std::string& s) {
  if (s == "brute") return EngineKind::brute;
  if (s == "threshold") return EngineKind::threshold;
  if (s == "dpso") return EngineKind::dpso;
  throw ConfigError("unknown engine '" + s + "'");
}

enum class BudgetMode { none, seconds, preset };

/// Time cap scaled to instance size: 0.005 s per user plus 0.005 s per cell
/// of the group space. Selected on the CLI as --budget paper.
inline double budget_preset_seconds(std::size_t n_users, std::uint64_t space_size) {
  return 0.005 * (static_cast<double>(n_users) + static_cast<double>(space_size));
}

struct RunConfig {
  std::string users_path;
  std::string items_path;
  std::string schema_path;
  std::vector<std::string> attributes;  // empty: every schema attribute
  std::vector<MetricId> metrics;        // empty: all five
  EngineKind engine = EngineKind::brute;
  double theta = 1.0;  // threshold engine's minimum group share, percent
  SwarmConfig swarm;
  SizeFilter filter;
  std::size_t top_n = 10;
  BudgetMode budget_mode = BudgetMode::none;
  double budget_seconds = 0.0;
  std::uint64_t seed = 0;
  std::string out_path;                  // empty: stdout
  std::string trace_path;                // per-iteration JSONL (dpso only)
  std::string precomputed_metrics_path;  // skips metric computation when set
  bool with_baseline = false;            // add an exhaustive run per metric for accuracy
};

inline std::string budget_mode_token(BudgetMode m) {
  switch (m) {
    case BudgetMode::none: return "none";
    case BudgetMode::seconds: return "seconds";
    case BudgetMode::preset: return "paper";
  }
  return "?";
}

/// The semantic content of a run: everything that can change results, and
/// nothing that cannot (output destinations are excluded).
inline nlohmann::json run_config_semantic_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["users"] = cfg.users_path;
  j["items"] = cfg.items_path;
  j["schema"] = cfg.schema_path;
  j["attributes"] = cfg.attributes;
  auto ms = nlohmann::json::array();
  for (MetricId m : cfg.metrics) ms.push_back(to_string(m));
  j["metrics"] = std::move(ms);
  j["engine"] = to_string(cfg.engine);
  j["theta"] = cfg.theta;
  j["swarm"] = {{"alpha", cfg.swarm.alpha},
                {"c1", cfg.swarm.c1},
                {"c2", cfg.swarm.c2},
                {"v_star", cfg.swarm.v_star},
                {"n_particles", cfg.swarm.n_particles},
                {"epsilon", cfg.swarm.epsilon},
                {"n_iterations", cfg.swarm.n_iterations},
                {"stagnation_resample", cfg.swarm.stagnation_resample},
                {"init", cfg.swarm.init == SwarmConfig::Init::uniform ? "uniform" : "distribution"}};
  j["min_fraction"] = cfg.filter.min_fraction;
  j["top_n"] = cfg.top_n;
  j["budget_mode"] = budget_mode_token(cfg.budget_mode);
  j["budget_seconds"] = cfg.budget_seconds;
  j["seed"] = cfg.seed;
  j["precomputed_metrics"] = cfg.precomputed_metrics_path;
  j["with_baseline"] = cfg.with_baseline;
  return j;
}

inline std::string config_hash(const RunConfig& cfg) {
  const std::string s = run_config_semantic_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct MetricRun {
  MetricId metric = MetricId::auc;
  SearchResult result;
  std::optional<double> uf_brute;  // with_baseline only
  std::vector<TraceRecord> trace;  // dpso only
};

struct FairnessReport {
  RunConfig cfg;
  std::string hash;
  std::vector<std::string> attr_names;
  std::vector<std::vector<std::string>> value_labels;  // per selected attribute
  std::size_t n_users = 0;
  std::uint64_t group_space_size = 0;
  std::size_t n_nonempty_groups = 0;
  double budget_seconds_effective = 0.0;  // 0 when no budget
  std::vector<MetricRun> runs;
  std::optional<MitigationReport> mitigation;
  double total_wall_s = 0.0;
};

namespace detail {

inline nlohmann::json key_json(const GroupKey& k, const std::vector<std::string>& names,
                               const std::vector<std::vector<std::string>>& labels) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t d = 0; d < k.values.size(); ++d)
    j[names[d]] = labels[d][static_cast<std::size_t>(k.values[d])];
  return j;
}

inline nlohmann::json stat_json(const GroupStat& s, const std::vector<std::string>& names,
                                const std::vector<std::vector<std::string>>& labels) {
  return {{"key", key_json(s.key, names, labels)},
          {"codes", s.key.values},
          {"mean", s.mean},
          {"size", s.size}};
}

}  // namespace detail

inline nlohmann::json report_to_json(const FairnessReport& rep) {
  nlohmann::json meta;
  meta["engine"] = to_string(rep.cfg.engine);
  meta["seed"] = rep.cfg.seed;
  meta["config_hash"] = rep.hash;
  meta["attributes"] = rep.attr_names;
  meta["n_users"] = rep.n_users;
  meta["group_space_size"] = rep.group_space_size;
  meta["n_nonempty_groups"] = rep.n_nonempty_groups;
  meta["min_fraction"] = rep.cfg.filter.min_fraction;
  meta["top_n"] = rep.cfg.top_n;
  meta["budget"] = {{"mode", budget_mode_token(rep.cfg.budget_mode)},
                    {"seconds", rep.budget_seconds_effective}};
  if (rep.cfg.engine == EngineKind::threshold) meta["theta"] = rep.cfg.theta;
  if (rep.cfg.engine == EngineKind::dpso) {
    meta["swarm"] = {{"alpha", rep.cfg.swarm.alpha},
                     {"c1", rep.cfg.swarm.c1},
                     {"c2", rep.cfg.swarm.c2},
                     {"v_star", rep.cfg.swarm.v_star},
                     {"epsilon", rep.cfg.swarm.epsilon},
                     {"n_particles", rep.cfg.swarm.n_particles},
                     {"n_iterations", rep.cfg.swarm.n_iterations},
                     {"init", rep.cfg.swarm.init == SwarmConfig::Init::uniform ? "uniform"
                                                                               : "distribution"}};
  }
  meta["total_wall_s"] = rep.total_wall_s;

  nlohmann::json results = nlohmann::json::object();
  nlohmann::json accuracy = nlohmann::json::object();
  bool any_accuracy = false;
  for (const MetricRun& r : rep.runs) {
    const SearchResult& sr = r.result;
    nlohmann::json jr;
    jr["uf"] = sr.uf;
    jr["best"] = detail::stat_json(sr.best, rep.attr_names, rep.value_labels);
    jr["worst"] = detail::stat_json(sr.worst, rep.attr_names, rep.value_labels);
    auto tops = [&](const std::vector<GroupStat>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (const GroupStat& s : v) a.push_back(detail::stat_json(s, rep.attr_names, rep.value_labels));
      return a;
    };
    jr["top_advantaged"] = tops(sr.top_advantaged);
    jr["top_disadvantaged"] = tops(sr.top_disadvantaged);
    jr["groups_evaluated"] = sr.groups_evaluated;
    jr["wall_time_s"] = sr.wall_time_s;
    jr["truncated"] = sr.truncated;
    results[to_string(r.metric)] = std::move(jr);
    if (r.uf_brute) {
      any_accuracy = true;
      accuracy[to_string(r.metric)] = {
          {"uf_engine", sr.uf},
          {"uf_brute", *r.uf_brute},
          {"accuracy", *r.uf_brute > 0.0 ? sr.uf / *r.uf_brute : 1.0}};
    }
  }

  nlohmann::json j;
  j["meta"] = std::move(meta);
  j["results"] = std::move(results);
  if (rep.mitigation) {
    const MitigationReport& mr = *rep.mitigation;
    nlohmann::json jm;
    jm["metric"] = to_string(mr.plan.metric);
    jm["strategy"] = to_string(mr.plan.strategy);
    jm["target_fraction"] = mr.plan.target_fraction;
    jm["lambda"] = mr.plan.lambda;
    jm["n_targeted_users"] = mr.n_targeted_users;
    jm["n_modified_users"] = mr.n_modified_users;
    nlohmann::json groups = nlohmann::json::array();
    for (const GroupMitigationRow& row : mr.groups) {
      nlohmann::json jg;
      jg["key"] = detail::key_json(row.key, rep.attr_names, rep.value_labels);
      jg["codes"] = row.key.values;
      jg["size"] = row.size;
      for (MetricId m : {MetricId::mrr, MetricId::ndcg, MetricId::urd, MetricId::urp}) {
        const MetricPair& p = row.metrics[static_cast<std::size_t>(m)];
        nlohmann::json jp;
        jp["before"] = p.before ? nlohmann::json(*p.before) : nlohmann::json(nullptr);
        jp["after"] = p.after ? nlohmann::json(*p.after) : nlohmann::json(nullptr);
        jg[to_string(m)] = std::move(jp);
      }
      groups.push_back(std::move(jg));
    }
    jm["groups"] = std::move(groups);
    nlohmann::json juf = nlohmann::json::object();
    for (MetricId m : kAllMetrics) {
      const MetricPair& p = mr.overall_uf[static_cast<std::size_t>(m)];
      nlohmann::json jp;
      jp["before"] = p.before ? nlohmann::json(*p.before) : nlohmann::json(nullptr);
      jp["after"] = p.after ? nlohmann::json(*p.after) : nlohmann::json(nullptr);
      juf[to_string(m)] = std::move(jp);
    }
    jm["overall_uf"] = std::move(juf);
    j["mitigation"] = std::move(jm);
  }
  if (any_accuracy) j["accuracy"] = std::move(accuracy);
  return j;
}

/// Report body with volatile timing fields removed; two runs with the same
/// seed must agree byte for byte on this rendering.
inline nlohmann::json canonical_report_body(nlohmann::json j) {
  if (j.is_object()) {
    j.erase("wall_time_s");
    j.erase("total_wall_s");
    for (auto& [k, v] : j.items()) v = canonical_report_body(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = canonical_report_body(v);
  }
  return j;
}

inline std::vector<MetricId> effective_metrics(const RunConfig& cfg) {
  if (!cfg.metrics.empty()) return cfg.metrics;
  return {kAllMetrics.begin(), kAllMetrics.end()};
}

inline BudgetOptions resolve_budget(const RunConfig& cfg, std::size_t n_users,
                                    std::uint64_t space_size, double* effective = nullptr) {
  BudgetOptions b;
  if (cfg.budget_mode == BudgetMode::seconds) {
    if (!(cfg.budget_seconds > 0.0)) throw ConfigError("budget seconds must be > 0");
    b.enabled = true;
    b.seconds = cfg.budget_seconds;
  } else if (cfg.budget_mode == BudgetMode::preset) {
    b.enabled = true;
    b.seconds = budget_preset_seconds(n_users, space_size);
  }
  b.shuffle_seed = cfg.seed;
  if (effective) *effective = b.enabled ? b.seconds : 0.0;
  return b;
}

inline FairnessReport run_test(const RunConfig& cfg, const Dataset& ds) {
  const auto t0 = std::chrono::steady_clock::now();
  FairnessReport rep;
  rep.cfg = cfg;
  rep.hash = config_hash(cfg);

  const UserMetricTable table = cfg.precomputed_metrics_path.empty()
                                    ? compute_table(ds)
                                    : load_metrics_csv(ds, cfg.precomputed_metrics_path);

  std::vector<std::string> attrs = cfg.attributes;
  if (attrs.empty())
    for (const auto& a : ds.schema.attributes) attrs.push_back(a.name);
  const GroupIndex idx = build_index(ds, attrs);

  rep.attr_names = idx.attr_names;
  for (std::size_t d : idx.selected) rep.value_labels.push_back(ds.schema.attributes[d].values);
  rep.n_users = idx.n_users;
  rep.group_space_size = idx.space_size();
  rep.n_nonempty_groups = idx.n_nonempty();

  const BudgetOptions budget =
      resolve_budget(cfg, idx.n_users, idx.space_size(), &rep.budget_seconds_effective);

  for (MetricId m : effective_metrics(cfg)) {
    MetricRun run;
    run.metric = m;
    switch (cfg.engine) {
      case EngineKind::brute:
        run.result = brute_force_search(idx, table, m, cfg.filter, cfg.top_n, budget);
        break;
      case EngineKind::threshold:
        run.result = threshold_search(idx, table, m, cfg.theta, cfg.filter, cfg.top_n, budget);
        break;
      case EngineKind::dpso: {
        SwarmConfig sw = cfg.swarm;
        sw.seed = cfg.seed;
        DpsoOutcome out = run_dpso_detailed(idx, table, m, cfg.filter, sw, budget, cfg.top_n);
        run.result = std::move(out.result);
        run.trace = std::move(out.trace);
        break;
      }
    }
    if (cfg.with_baseline && cfg.engine != EngineKind::brute)
      run.uf_brute = brute_force_search(idx, table, m, cfg.filter, cfg.top_n).uf;
    rep.runs.push_back(std::move(run));
  }

  rep.total_wall_s = detail::elapsed_s(t0);
  return rep;
}

inline FairnessReport run_test(const RunConfig& cfg) {
  const Dataset ds = load_dataset(cfg.users_path, cfg.items_path, cfg.schema_path);
  return run_test(cfg, ds);
}

inline void write_trace_jsonl(const FairnessReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trace file: " + path);
  for (const MetricRun& r : rep.runs)
    for (const TraceRecord& t : r.trace) {
      nlohmann::json j;
      j["metric"] = to_string(r.metric);
      j["iteration"] = t.iteration;
      j["gbest_a"] = t.a_defined ? nlohmann::json(t.gbest_a) : nlohmann::json(nullptr);
      j["gbest_d"] = t.d_defined ? nlohmann::json(t.gbest_d) : nlohmann::json(nullptr);
      j["infobase_size"] = t.infobase_size;
      out << j.dump() << "\n";
    }
}

struct MitigateOptions {
  MetricId metric = MetricId::urd;
  double fraction = 0.10;
  std::optional<MitigationStrategy> strategy;  // unset: implied by the metric
  double lambda = 0.5;
};

/// Audits the chosen metric, takes the worst slice of the evaluated groups,
/// re-ranks their members, and attaches the before/after block.
inline FairnessReport run_mitigate(const RunConfig& cfg, const Dataset& ds,
                                   const MitigateOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig search_cfg = cfg;
  search_cfg.metrics = {opt.metric};
  FairnessReport rep = run_test(search_cfg, ds);

  MitigationPlan plan;
  plan.metric = opt.metric;
  plan.target_fraction = opt.fraction;
  plan.strategy = opt.strategy.value_or(default_strategy(opt.metric));
  plan.lambda = opt.lambda;
  plan.target_groups =
      select_worst_groups(rep.runs.front().result.evaluated, opt.metric, opt.fraction);

  std::vector<std::string> attrs = cfg.attributes;
  if (attrs.empty())
    for (const auto& a : ds.schema.attributes) attrs.push_back(a.name);
  const GroupIndex idx = build_index(ds, attrs);
  rep.mitigation = evaluate_mitigation(ds, idx, plan, cfg.filter);
  rep.total_wall_s = detail::elapsed_s(t0);
  return rep;
}

struct CompareRow {
  MetricId metric = MetricId::auc;
  EngineKind engine = EngineKind::brute;
  double uf = 0.0;
  double uf_brute = 0.0;
  double accuracy = 1.0;
  std::size_t evals = 0;
  std::size_t evals_brute = 0;
  double eval_ratio = 1.0;
  double wall_s = 0.0;
  double wall_brute_s = 0.0;
};

/// Runs all three engines over the same table and index; the exhaustive
/// engine is both a row and the denominator of every ratio.
inline std::vector<CompareRow> compare_engines(const RunConfig& cfg, const Dataset& ds) {
  const UserMetricTable table = cfg.precomputed_metrics_path.empty()
                                    ? compute_table(ds)
                                    : load_metrics_csv(ds, cfg.precomputed_metrics_path);
  std::vector<std::string> attrs = cfg.attributes;
  if (attrs.empty())
    for (const auto& a : ds.schema.attributes) attrs.push_back(a.name);
  const GroupIndex idx = build_index(ds, attrs);
  const BudgetOptions budget = resolve_budget(cfg, idx.n_users, idx.space_size());

  std::vector<CompareRow> rows;
  for (MetricId m : effective_metrics(cfg)) {
    const SearchResult brute = brute_force_search(idx, table, m, cfg.filter, cfg.top_n);
    auto add = [&](EngineKind e, const SearchResult& r) {
      CompareRow row;
      row.metric = m;
      row.engine = e;
      row.uf = r.uf;
      row.uf_brute = brute.uf;
      row.accuracy = brute.uf > 0.0 ? r.uf / brute.uf : 1.0;
      row.evals = r.groups_evaluated;
      row.evals_brute = brute.groups_evaluated;
      row.eval_ratio = brute.groups_evaluated
                           ? static_cast<double>(r.groups_evaluated) /
                                 static_cast<double>(brute.groups_evaluated)
                           : 1.0;
      row.wall_s = r.wall_time_s;
      row.wall_brute_s = brute.wall_time_s;
      rows.push_back(row);
    };
    add(EngineKind::brute, brute);
    add(EngineKind::threshold,
        threshold_search(idx, table, m, cfg.theta, cfg.filter, cfg.top_n, budget));
    SwarmConfig sw = cfg.swarm;
    sw.seed = cfg.seed;
    add(EngineKind::dpso, run_dpso(idx, table, m, cfg.filter, sw, budget, cfg.top_n));
  }
  return rows;
}

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string s =
      "metric,engine,uf,uf_brute,accuracy,groups_evaluated,groups_evaluated_brute,eval_ratio,"
      "wall_time_s,wall_time_brute_s\n";
  for (const CompareRow& r : rows) {
    s += to_string(r.metric);
    s += ",";
    s += to_string(r.engine);
    s += "," + format_double(r.uf) + "," + format_double(r.uf_brute) + "," +
         format_double(r.accuracy) + "," + std::to_string(r.evals) + "," +
         std::to_string(r.evals_brute) + "," + format_double(r.eval_ratio) + "," +
         format_double(r.wall_s) + "," + format_double(r.wall_brute_s) + "\n";
  }
  return s;
}

struct CorrelationMatrix {
  std::vector<MetricId> metrics;
  std::vector<std::vector<std::optional<double>>> r;
};

/// Pearson correlation of per-metric unfairness across several reports (one
/// report per audited system). Constant vectors have no defined correlation.
inline CorrelationMatrix metric_correlation(const std::vector<std::map<MetricId, double>>& ufs) {
  if (ufs.size() < 3) throw ConfigError("correlation needs at least 3 reports");
  std::vector<MetricId> metrics;
  for (const auto& [m, v] : ufs.front()) metrics.push_back(m);
  for (const auto& rep : ufs) {
    if (rep.size() != metrics.size()) throw ConfigError("reports cover different metric sets");
    for (MetricId m : metrics)
      if (!rep.count(m)) throw ConfigError("reports cover different metric sets");
  }

  const std::size_t n = ufs.size();
  const std::size_t k = metrics.size();
  std::vector<std::vector<double>> x(k, std::vector<double>(n));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < n; ++j) x[i][j] = ufs[j].at(metrics[i]);

  CorrelationMatrix cm;
  cm.metrics = metrics;
  cm.r.assign(k, std::vector<std::optional<double>>(k));
  std::vector<double> mean(k, 0.0), sd(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (double v : x[i]) mean[i] += v;
    mean[i] /= static_cast<double>(n);
    for (double v : x[i]) sd[i] += (v - mean[i]) * (v - mean[i]);
    sd[i] = std::sqrt(sd[i]);
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (sd[i] == 0.0 || sd[j] == 0.0) continue;  // flagged undefined
      double cov = 0.0;
      for (std::size_t t = 0; t < n; ++t) cov += (x[i][t] - mean[i]) * (x[j][t] - mean[j]);
      cm.r[i][j] = cov / (sd[i] * sd[j]);
    }
  }
  return cm;
}

inline nlohmann::json correlation_to_json(const CorrelationMatrix& cm) {
  nlohmann::json j;
  auto names = nlohmann::json::array();
  for (MetricId m : cm.metrics) names.push_back(to_string(m));
  j["metrics"] = std::move(names);
  auto matrix = nlohmann::json::array();
  for (const auto& row : cm.r) {
    auto jr = nlohmann::json::array();
    for (const auto& v : row) jr.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    matrix.push_back(std::move(jr));
  }
  j["matrix"] = std::move(matrix);
  return j;
}

/// Pulls the per-metric uf values back out of a serialized report.
inline std::map<MetricId, double> load_report_ufs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("report: invalid JSON: " + std::string(e.what()));
  }
  if (!j.contains("results") || !j["results"].is_object())
    throw DataError("report: missing results object: " + path);
  std::map<MetricId, double> ufs;
  for (const auto& [name, block] : j["results"].items())
    ufs[parse_metric(name)] = block.at("uf").get<double>();
  return ufs;
}

}  // namespace recaudit
