#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "recaudit/report.hpp"
#include "recaudit/syngen.hpp"

namespace {

using namespace recaudit;

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw DataError("cannot write output file: " + out_path);
  f << content;
}

struct CommonOpts {
  std::string users, items, schema;
  std::vector<std::string> metrics;
  std::string attrs;
  std::string engine = "brute";
  double theta = 1.0;
  double epsilon = 0.0;
  int iters = -1;
  std::size_t particles = 0;
  double alpha = 0.09, c1 = 2.0, c2 = 2.0, vstar = 2.0;
  double min_fraction = 1e-5;
  std::string budget = "none";
  std::uint64_t seed = 0;
  std::size_t top_n = 10;
  std::string out;
  std::string trace;
  std::string precomputed;
  bool with_baseline = false;
  std::string init = "distribution";
  bool no_resample = false;
};

void add_dataset_flags(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--users", o.users, "users JSONL file")->required();
  sub->add_option("--items", o.items, "items CSV file")->required();
  sub->add_option("--schema", o.schema, "attribute schema JSON file")->required();
}

void add_engine_flags(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--metric", o.metrics, "metric to audit (repeatable; default: all)");
  sub->add_option("--attrs", o.attrs, "comma list of sensitive attributes (default: all)");
  sub->add_option("--engine", o.engine, "search engine: brute | threshold | dpso");
  sub->add_option("--theta", o.theta, "threshold engine: min group share, percent");
  sub->add_option("--epsilon", o.epsilon, "dpso: particles per swarm as a share of the space");
  sub->add_option("--iters", o.iters, "dpso: iteration count");
  sub->add_option("--particles", o.particles, "dpso: explicit particles per swarm");
  sub->add_option("--alpha", o.alpha, "dpso: thermal motion factor");
  sub->add_option("--c1", o.c1, "dpso: individual-best acceleration");
  sub->add_option("--c2", o.c2, "dpso: global-best acceleration");
  sub->add_option("--vstar", o.vstar, "dpso: velocity bound");
  sub->add_option("--init", o.init, "dpso: initializer: distribution | uniform");
  sub->add_flag("--no-resample", o.no_resample, "dpso: keep stranded particles in place");
  sub->add_option("--min-fraction", o.min_fraction, "hide groups below this population share");
  sub->add_option("--budget", o.budget, "time cap: none | <seconds> | paper");
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--top-n", o.top_n, "groups listed per direction");
  sub->add_option("--precomputed", o.precomputed, "per-user metrics CSV to use as-is");
}

RunConfig build_run_config(const CommonOpts& o) {
  RunConfig cfg;
  cfg.users_path = o.users;
  cfg.items_path = o.items;
  cfg.schema_path = o.schema;
  cfg.attributes = split_csv(o.attrs);
  for (const std::string& m : o.metrics) cfg.metrics.push_back(parse_metric(m));
  cfg.engine = parse_engine(o.engine);
  cfg.theta = o.theta;
  cfg.swarm.alpha = o.alpha;
  cfg.swarm.c1 = o.c1;
  cfg.swarm.c2 = o.c2;
  cfg.swarm.v_star = o.vstar;
  cfg.swarm.epsilon = o.epsilon;
  cfg.swarm.n_iterations = o.iters;
  cfg.swarm.n_particles = o.particles;
  cfg.swarm.stagnation_resample = !o.no_resample;
  if (o.init == "uniform")
    cfg.swarm.init = SwarmConfig::Init::uniform;
  else if (o.init != "distribution")
    throw ConfigError("unknown initializer '" + o.init + "'");
  if (!(o.min_fraction >= 0.0 && o.min_fraction < 1.0))
    throw ConfigError("min-fraction must be in [0,1)");
  cfg.filter.min_fraction = o.min_fraction;
  if (o.budget == "none") {
    cfg.budget_mode = BudgetMode::none;
  } else if (o.budget == "paper") {
    cfg.budget_mode = BudgetMode::preset;
  } else {
    try {
      std::size_t used = 0;
      cfg.budget_seconds = std::stod(o.budget, &used);
      if (used != o.budget.size()) throw std::invalid_argument(o.budget);
    } catch (const std::exception&) {
      throw ConfigError("budget must be none, paper, or a number of seconds");
    }
    cfg.budget_mode = BudgetMode::seconds;
  }
  cfg.seed = o.seed;
  cfg.top_n = o.top_n;
  cfg.out_path = o.out;
  cfg.trace_path = o.trace;
  cfg.precomputed_metrics_path = o.precomputed;
  cfg.with_baseline = o.with_baseline;
  return cfg;
}

struct GenOpts {
  std::string metric = "auc";
  std::size_t n_users = 2000;
  std::string attr_values = "8,8,8";
  double skew = 1.5;
  double band_noise = 0.12;
  int plateau_radius = 2;
  std::size_t ring_members = 4;
  std::size_t planted_members = 32;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

int run_gen(const GenOpts& o) {
  SynConfig cfg;
  cfg.metric = parse_metric(o.metric);
  cfg.n_users = o.n_users;
  cfg.attribute_values.clear();
  for (const std::string& v : split_csv(o.attr_values)) {
    try {
      cfg.attribute_values.push_back(std::stoi(v));
    } catch (const std::exception&) {
      throw ConfigError("attr-values must be a comma list of integers");
    }
  }
  cfg.skew = o.skew;
  cfg.band_noise = o.band_noise;
  cfg.plateau_radius = o.plateau_radius;
  cfg.ring_members = o.ring_members;
  cfg.planted_members = o.planted_members;
  cfg.seed = o.seed;

  const SynInstance inst = generate(cfg);
  write_instance(inst, o.out_dir);

  nlohmann::json j;
  j["dir"] = o.out_dir;
  j["metric"] = to_string(inst.truth.metric);
  j["n_users"] = inst.ds.users.size();
  j["best_key"] = inst.truth.best_key.values;
  j["worst_key"] = inst.truth.worst_key.values;
  j["uf"] = inst.truth.uf;
  std::cout << j.dump() << "\n";
  return 0;
}

int run_metrics(const CommonOpts& o) {
  const Dataset ds = load_dataset(o.users, o.items, o.schema);
  const UserMetricTable t = compute_table(ds);
  emit(o.out, metrics_csv_string(t, ds));
  return 0;
}

int run_test_cmd(const CommonOpts& o) {
  const RunConfig cfg = build_run_config(o);
  const FairnessReport rep = run_test(cfg);
  emit(cfg.out_path, report_to_json(rep).dump(2) + "\n");
  if (!cfg.trace_path.empty() && cfg.engine == EngineKind::dpso)
    write_trace_jsonl(rep, cfg.trace_path);
  return 0;
}

int run_compare(const CommonOpts& o) {
  const RunConfig cfg = build_run_config(o);
  const Dataset ds = load_dataset(cfg.users_path, cfg.items_path, cfg.schema_path);
  emit(cfg.out_path, compare_csv(compare_engines(cfg, ds)));
  return 0;
}

struct MitigateCliOpts {
  std::string metric = "urd";
  double fraction = 0.10;
  std::string strategy;  // empty: implied by metric
  double lambda = 0.5;
};

int run_mitigate_cmd(const CommonOpts& o, const MitigateCliOpts& mo) {
  const RunConfig cfg = build_run_config(o);
  MitigateOptions opt;
  opt.metric = parse_metric(mo.metric);
  opt.fraction = mo.fraction;
  opt.lambda = mo.lambda;
  if (!mo.strategy.empty()) {
    if (mo.strategy == "diversify")
      opt.strategy = MitigationStrategy::diversify;
    else if (mo.strategy == "popularity" || mo.strategy == "popularity_calibrate")
      opt.strategy = MitigationStrategy::popularity_calibrate;
    else
      throw ConfigError("unknown strategy '" + mo.strategy + "'");
  }
  const Dataset ds = load_dataset(cfg.users_path, cfg.items_path, cfg.schema_path);
  const FairnessReport rep = run_mitigate(cfg, ds, opt);
  emit(cfg.out_path, report_to_json(rep).dump(2) + "\n");
  return 0;
}

int run_correlate(const std::vector<std::string>& reports, const std::string& out) {
  std::vector<std::map<MetricId, double>> ufs;
  for (const std::string& path : reports) ufs.push_back(load_report_ufs(path));
  emit(out, correlation_to_json(metric_correlation(ufs)).dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"group-fairness auditor for ranked recommendation outputs"};
  app.require_subcommand(1);

  GenOpts gen_opts;
  CLI::App* gen = app.add_subcommand("gen", "generate a seeded synthetic benchmark instance");
  gen->add_option("--metric", gen_opts.metric, "metric the planted gap targets");
  gen->add_option("--n-users", gen_opts.n_users, "user count");
  gen->add_option("--attr-values", gen_opts.attr_values, "comma list of per-attribute value counts");
  gen->add_option("--skew", gen_opts.skew, "attribute distribution concentration");
  gen->add_option("--band-noise", gen_opts.band_noise, "background group noise");
  gen->add_option("--plateau-radius", gen_opts.plateau_radius, "populated slope radius");
  gen->add_option("--ring-members", gen_opts.ring_members, "users forced into each slope group");
  gen->add_option("--planted-members", gen_opts.planted_members, "users forced into each planted group");
  gen->add_option("--seed", gen_opts.seed, "random seed");
  gen->add_option("--out", gen_opts.out_dir, "output directory");

  CommonOpts metrics_opts;
  CLI::App* metrics_cmd = app.add_subcommand("metrics", "emit the per-user metric table as CSV");
  add_dataset_flags(metrics_cmd, metrics_opts);
  metrics_cmd->add_option("--out", metrics_opts.out, "output CSV (default: stdout)");

  CommonOpts test_opts;
  CLI::App* test_cmd = app.add_subcommand("test", "audit group fairness and emit a JSON report");
  add_dataset_flags(test_cmd, test_opts);
  add_engine_flags(test_cmd, test_opts);
  test_cmd->add_option("--out", test_opts.out, "report path (default: stdout)");
  test_cmd->add_option("--trace", test_opts.trace, "per-iteration trace JSONL (dpso)");
  test_cmd->add_flag("--with-baseline", test_opts.with_baseline,
                     "also run the exhaustive engine and report accuracy");

  CommonOpts compare_opts;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "run all engines and emit an accuracy/cost CSV");
  add_dataset_flags(compare_cmd, compare_opts);
  add_engine_flags(compare_cmd, compare_opts);
  compare_cmd->add_option("--out", compare_opts.out, "output CSV (default: stdout)");

  CommonOpts mit_opts;
  MitigateCliOpts mit_cli;
  CLI::App* mit_cmd =
      app.add_subcommand("mitigate", "re-rank the worst groups and report before/after");
  add_dataset_flags(mit_cmd, mit_opts);
  add_engine_flags(mit_cmd, mit_opts);
  mit_cmd->add_option("--out", mit_opts.out, "report path (default: stdout)");
  mit_cmd->add_option("--target-metric", mit_cli.metric, "metric to repair (default urd)");
  mit_cmd->add_option("--fraction", mit_cli.fraction, "share of worst groups to target");
  mit_cmd->add_option("--strategy", mit_cli.strategy, "diversify | popularity");
  mit_cmd->add_option("--lambda", mit_cli.lambda, "diversification trade-off weight");

  std::vector<std::string> correlate_reports;
  std::string correlate_out;
  CLI::App* corr_cmd =
      app.add_subcommand("correlate", "correlate unfairness across several reports");
  corr_cmd->add_option("reports", correlate_reports, "report JSON files (>= 3)")->required();
  corr_cmd->add_option("--out", correlate_out, "output path (default: stdout)");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen(gen_opts);
    if (metrics_cmd->parsed()) return run_metrics(metrics_opts);
    if (test_cmd->parsed()) return run_test_cmd(test_opts);
    if (compare_cmd->parsed()) return run_compare(compare_opts);
    if (mit_cmd->parsed()) return run_mitigate_cmd(mit_opts, mit_cli);
    if (corr_cmd->parsed()) return run_correlate(correlate_reports, correlate_out);
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const SearchError& e) {
    std::cerr << "search failed: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
