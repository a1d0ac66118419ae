#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "helpers.hpp"

using namespace recaudit;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args, bool merge_stderr = false) {
  const std::string cmd =
      std::string(RECAUDIT_CLI) + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  CliResult r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = ::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int rc = ::pclose(p);
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() /
             ("recaudit_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  void write(const std::string& name, const std::string& content) const {
    std::ofstream out(file(name));
    out << content;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// writes a dataset and returns the --users/--items/--schema argument triple
std::string stage_dataset(const TempDir& tmp, const Dataset& ds) {
  save_dataset(ds, tmp.file("users.jsonl"), tmp.file("items.csv"), tmp.file("schema.json"));
  return "--users " + tmp.file("users.jsonl") + " --items " + tmp.file("items.csv") +
         " --schema " + tmp.file("schema.json");
}

Dataset shared_dataset() {
  Rng rng(881);
  return random_dataset(rng, 40, {2, 2});
}

}  // namespace

TEST_CASE("help and argument plumbing") {
  REQUIRE(run_cli("--help").code == 0);
  REQUIRE(run_cli("--help").out.find("gen") != std::string::npos);
  REQUIRE(run_cli("").code == 2);          // a subcommand is required
  REQUIRE(run_cli("warble").code == 2);    // unknown subcommand
  REQUIRE(run_cli("test --nope x").code == 2);
}

TEST_CASE("generated instances audit back to the published truth") {
  TempDir tmp("gen");
  const std::string gen_dir = tmp.file("inst");
  const CliResult gen = run_cli(
      "gen --metric mrr --n-users 160 --attr-values 4,4 --plateau-radius 1 "
      "--ring-members 2 --planted-members 16 --seed 5 --out " + gen_dir);
  REQUIRE(gen.code == 0);
  const nlohmann::json gj = nlohmann::json::parse(gen.out);
  REQUIRE(gj["dir"] == gen_dir);
  REQUIRE(gj["metric"] == "mrr");
  REQUIRE(gj["n_users"] == 160);
  REQUIRE(gj.contains("uf"));

  const std::string data = "--users " + gen_dir + "/users.jsonl --items " + gen_dir +
                           "/items.csv --schema " + gen_dir + "/schema.json";
  const CliResult audit = run_cli("test " + data + " --metric mrr --engine brute");
  REQUIRE(audit.code == 0);
  const nlohmann::json rep = nlohmann::json::parse(audit.out);
  REQUIRE(rep["results"]["mrr"]["uf"] == gj["uf"]);
  REQUIRE(rep["results"]["mrr"]["best"]["codes"] == gj["best_key"]);
  REQUIRE(rep["results"]["mrr"]["worst"]["codes"] == gj["worst_key"]);
  REQUIRE(rep["meta"]["engine"] == "brute");
}

TEST_CASE("configuration mistakes exit with code 2") {
  TempDir tmp("cfg");
  const std::string data = stage_dataset(tmp, shared_dataset());
  REQUIRE(run_cli("test " + data + " --metric bogus").code == 2);
  REQUIRE(run_cli("test " + data + " --engine magic").code == 2);
  REQUIRE(run_cli("test " + data + " --budget soon").code == 2);
  REQUIRE(run_cli("test " + data + " --init sideways --engine dpso").code == 2);
  REQUIRE(run_cli("test " + data + " --min-fraction 1.5").code == 2);
  REQUIRE(run_cli("test " + data + " --attrs nope").code == 2);
  REQUIRE(run_cli("gen --attr-values 4,x").code == 2);
}

TEST_CASE("unreadable or broken data exits with code 3") {
  TempDir tmp("data");
  const Dataset ds = shared_dataset();
  save_dataset(ds, tmp.file("users.jsonl"), tmp.file("items.csv"), tmp.file("schema.json"));
  REQUIRE(run_cli("test --users " + tmp.file("absent.jsonl") + " --items " +
                  tmp.file("items.csv") + " --schema " + tmp.file("schema.json"))
              .code == 3);
  tmp.write("broken.jsonl", "{not json\n");
  const CliResult r = run_cli("test --users " + tmp.file("broken.jsonl") + " --items " +
                                  tmp.file("items.csv") + " --schema " + tmp.file("schema.json"),
                              true);
  REQUIRE(r.code == 3);
  REQUIRE(r.out.find("users line 1") != std::string::npos);
}

TEST_CASE("a search with nothing to compare exits with code 4") {
  TempDir tmp("single");
  tmp.write("schema.json", R"({"attributes":[{"name":"g","values":["a","b"]}]})");
  tmp.write("items.csv", "item_id,tags,train_interactions\nx,pop,1\n");
  std::string users;
  for (int i = 0; i < 3; ++i)
    users += "{\"user_id\":\"u" + std::to_string(i) +
             "\",\"sensitive\":[0],\"k\":1,\"candidates\":[{\"item\":\"x\",\"score\":1.0,"
             "\"relevant\":true}]}\n";
  tmp.write("users.jsonl", users);
  const CliResult r = run_cli("test --users " + tmp.file("users.jsonl") + " --items " +
                              tmp.file("items.csv") + " --schema " + tmp.file("schema.json") +
                              " --metric mrr");
  REQUIRE(r.code == 4);
}

TEST_CASE("reports written through the cli are reproducible") {
  TempDir tmp("repro");
  const std::string data = stage_dataset(tmp, shared_dataset());
  const std::string flags =
      " --metric mrr --metric urd --engine dpso --seed 9 --iters 5 --particles 4 --out ";
  REQUIRE(run_cli("test " + data + flags + tmp.file("rep1.json")).code == 0);
  REQUIRE(run_cli("test " + data + flags + tmp.file("rep2.json")).code == 0);
  const nlohmann::json a = nlohmann::json::parse(slurp(tmp.file("rep1.json")));
  const nlohmann::json b = nlohmann::json::parse(slurp(tmp.file("rep2.json")));
  REQUIRE(canonical_report_body(a).dump() == canonical_report_body(b).dump());
  REQUIRE(a["results"].size() == 2);
}

TEST_CASE("trace files come out of dpso audits") {
  TempDir tmp("trace");
  const std::string data = stage_dataset(tmp, shared_dataset());
  REQUIRE(run_cli("test " + data + " --metric mrr --engine dpso --iters 4 --particles 3" +
                  " --seed 3 --out " + tmp.file("rep.json") + " --trace " + tmp.file("t.jsonl"))
              .code == 0);
  std::ifstream in(tmp.file("t.jsonl"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    REQUIRE(j["metric"] == "mrr");
    REQUIRE(j.contains("infobase_size"));
    ++lines;
  }
  REQUIRE(lines == 5);
}

TEST_CASE("metrics subcommand emits the per-user table") {
  TempDir tmp("metrics");
  const std::string data = stage_dataset(tmp, shared_dataset());
  const CliResult r = run_cli("metrics " + data);
  REQUIRE(r.code == 0);
  REQUIRE(r.out.rfind("user_id,metric,value\n", 0) == 0);
  REQUIRE(r.out.find(",mrr,") != std::string::npos);

  // and a test run accepting it back via --precomputed
  REQUIRE(run_cli("metrics " + data + " --out " + tmp.file("m.csv")).code == 0);
  const CliResult reuse =
      run_cli("test " + data + " --metric mrr --precomputed " + tmp.file("m.csv"));
  REQUIRE(reuse.code == 0);
  const CliResult direct = run_cli("test " + data + " --metric mrr");
  REQUIRE(canonical_report_body(nlohmann::json::parse(reuse.out))["results"] ==
          canonical_report_body(nlohmann::json::parse(direct.out))["results"]);
}

TEST_CASE("compare subcommand emits the engine csv") {
  TempDir tmp("compare");
  const std::string data = stage_dataset(tmp, shared_dataset());
  const CliResult r =
      run_cli("compare " + data + " --metric mrr --iters 4 --particles 3 --seed 2");
  REQUIRE(r.code == 0);
  REQUIRE(r.out.rfind("metric,engine,uf,uf_brute,accuracy,groups_evaluated,"
                      "groups_evaluated_brute,eval_ratio,wall_time_s,wall_time_brute_s\n",
                      0) == 0);
  REQUIRE(r.out.find("mrr,brute,") != std::string::npos);
  REQUIRE(r.out.find("mrr,threshold,") != std::string::npos);
  REQUIRE(r.out.find("mrr,dpso,") != std::string::npos);
}

TEST_CASE("mitigate subcommand attaches the before and after block") {
  TempDir tmp("mitigate");
  const std::string data = stage_dataset(tmp, shared_dataset());
  const CliResult r =
      run_cli("mitigate " + data + " --target-metric urd --fraction 0.5 --strategy diversify");
  REQUIRE(r.code == 0);
  const nlohmann::json j = nlohmann::json::parse(r.out);
  REQUIRE(j.contains("mitigation"));
  REQUIRE(j["mitigation"]["metric"] == "urd");
  REQUIRE(run_cli("mitigate " + data + " --strategy launder").code == 2);
}

TEST_CASE("correlate subcommand crosses several reports") {
  TempDir tmp("correlate");
  auto fake_report = [&](const std::string& name, double auc, double mrr) {
    nlohmann::json j;
    j["results"]["auc"]["uf"] = auc;
    j["results"]["mrr"]["uf"] = mrr;
    tmp.write(name, j.dump());
  };
  fake_report("r1.json", 1.0, 3.0);
  fake_report("r2.json", 2.0, 2.0);
  fake_report("r3.json", 3.0, 1.0);
  const std::string files =
      tmp.file("r1.json") + " " + tmp.file("r2.json") + " " + tmp.file("r3.json");
  const CliResult r = run_cli("correlate " + files);
  REQUIRE(r.code == 0);
  const nlohmann::json j = nlohmann::json::parse(r.out);
  REQUIRE(j["metrics"] == nlohmann::json({"auc", "mrr"}));
  REQUIRE_THAT(j["matrix"][0][1].get<double>(), Catch::Matchers::WithinAbs(-1.0, 1e-12));

  REQUIRE(run_cli("correlate " + tmp.file("r1.json") + " " + tmp.file("r2.json")).code == 2);
  REQUIRE(run_cli("correlate " + files + " " + tmp.file("r4.json")).code == 3);
}

TEST_CASE("budget token from the cost model is accepted") {
  TempDir tmp("budget");
  const std::string data = stage_dataset(tmp, shared_dataset());
  const CliResult r = run_cli("test " + data + " --metric mrr --budget paper");
  REQUIRE(r.code == 0);
  const nlohmann::json j = nlohmann::json::parse(r.out);
  REQUIRE(j["meta"]["budget"]["mode"] == "paper");
  REQUIRE(j["meta"]["budget"]["seconds"].get<double>() > 0.0);
  REQUIRE(j["results"]["mrr"]["truncated"] == false);
}
