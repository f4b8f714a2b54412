#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "afl/cli.hpp"
#include "support.hpp"

using namespace afl;
using afl::testing::config_path;
using afl::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path last_line_path(const std::string& out) {
  std::string s = out;
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return fs::path(s.substr(s.rfind('\n') == std::string::npos ? 0 : s.rfind('\n') + 1));
}

std::vector<fs::path> subdirs(const fs::path& p) {
  std::vector<fs::path> v;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_directory()) v.push_back(e.path());
  return v;
}

}  // namespace

TEST_CASE("run writes the three artifacts") {
  TempDir tmp("cli-run");
  const auto r = cli({"run", "--config", config_path("minimal.json"), "--out", tmp.path().string()});
  REQUIRE(r.code == exit_ok);
  const fs::path dir = last_line_path(r.out);
  for (const char* f : {"rounds.csv", "summary.json", "manifest.json"}) CHECK(fs::exists(dir / f));
  const json manifest = json::parse(slurp(dir / "manifest.json"));
  for (const char* k : {"hash", "seed", "config", "outputs", "started", "finished"}) CHECK(manifest.contains(k));
  const std::string csv = slurp(dir / "rounds.csv");
  CHECK(csv.rfind("# manifest " + manifest["hash"].get<std::string>(), 0) == 0);
  CHECK(csv.find("t,wallclock,mode,policy,K,Pi,max_age,M_t,loss,accuracy,bits_used,symbols_used") != std::string::npos);
}

TEST_CASE("overrides reach the summary") {
  TempDir tmp("cli-override");
  const auto r = cli({"run", "--config", config_path("minimal.json"), "--out", tmp.path().string(), "--override",
                      "gamma=0.5", "--seed", "9"});
  REQUIRE(r.code == exit_ok);
  const json s = json::parse(slurp(last_line_path(r.out) / "summary.json"));
  CHECK(s["gamma"] == 0.5);
  CHECK(s["constants"]["gamma"] == 0.5);
  CHECK(s["seed"] == 9);
}

TEST_CASE("identical configurations reproduce byte for byte") {
  TempDir tmp("cli-repro");
  const std::vector<std::string> args{"run", "--config", config_path("minimal.json"), "--out", tmp.path().string()};
  const auto a = cli(args);
  const auto b = cli(args);
  REQUIRE(a.code == exit_ok);
  REQUIRE(b.code == exit_ok);
  CHECK(last_line_path(a.out) != last_line_path(b.out));
  CHECK(slurp(last_line_path(a.out) / "rounds.csv") == slurp(last_line_path(b.out) / "rounds.csv"));
}

TEST_CASE("configuration errors exit with the usage code") {
  TempDir tmp("cli-bad");
  auto r = cli({"run", "--config", config_path("minimal.json"), "--out", tmp.path().string(), "--override",
                "not_a_key=3"});
  CHECK(r.code == exit_usage);
  CHECK(r.err.find("not_a_key") != std::string::npos);
  r = cli({"run", "--config", (tmp.path() / "missing.json").string(), "--out", tmp.path().string()});
  CHECK(r.code == exit_usage);
  r = cli({"run", "--config", config_path("minimal.json"), "--out", tmp.path().string(), "--override", "gamma=-1"});
  CHECK(r.code == exit_usage);
  CHECK(r.err.find("gamma") != std::string::npos);
  r = cli({"bogus"});
  CHECK(r.code == exit_usage);
  r = cli({"run"});
  CHECK(r.code == exit_usage);
}

TEST_CASE("verify negative control fails with a structured report") {
  TempDir tmp("cli-verify");
  const auto r = cli({"verify", "--config", config_path("verify.json"), "--out", tmp.path().string(), "--inject-bias",
                      "0.05", "--seeds", "2", "--horizon", "40", "--draws", "20000", "--samples", "10000"});
  CHECK(r.code == exit_check_failed);
  CHECK(r.out.find("FAIL quantizer_unbiased") != std::string::npos);
  const json report = json::parse(slurp(last_line_path(r.out) / "verify.json"));
  CHECK(report["pass"] == false);
  REQUIRE(report["checks"].size() >= 6);
  for (const auto& c : report["checks"])
    for (const char* k : {"name", "lhs", "rhs", "margin", "pass"}) CHECK(c.contains(k));
}

TEST_CASE("sweep over gamma") {
  TempDir tmp("cli-sweep");
  const auto r = cli({"sweep", "--config", config_path("minimal.json"), "--out", tmp.path().string(), "--axis",
                      "gamma=0.5,1,2", "--jobs", "2"});
  REQUIRE(r.code == exit_ok);
  const fs::path dir = last_line_path(r.out);
  CHECK(subdirs(dir).size() == 3);
  const std::string csv = slurp(dir / "sweep.csv");
  CHECK(csv.rfind("# manifest ", 0) == 0);
  CHECK(csv.find("axis,value,point,seed,t,") != std::string::npos);
  const json s = json::parse(slurp(dir / "sweep_summary.json"));
  REQUIRE(s["points"].size() == 3);
  CHECK(s["points"][0]["seed"] != s["points"][1]["seed"]);
}

TEST_CASE("sweep over policies and period ratios") {
  TempDir tmp("cli-sweep2");
  auto r = cli({"sweep", "--config", config_path("minimal.json"), "--out", tmp.path().string(), "--axis",
                "policy=proposed,random,bc,bcbn2,age", "--seed-stride", "0"});
  REQUIRE(r.code == exit_ok);
  const json s = json::parse(slurp(last_line_path(r.out) / "sweep_summary.json"));
  REQUIRE(s["points"].size() == 5);
  CHECK(s["points"][0]["seed"] == s["points"][4]["seed"]);
  r = cli({"sweep", "--config", config_path("minimal.json"), "--out", tmp.path().string(), "--axis",
           "period_ratio=1,2,4,8"});
  REQUIRE(r.code == exit_ok);
  CHECK(subdirs(last_line_path(r.out)).size() == 4);
  r = cli({"sweep", "--config", config_path("minimal.json"), "--out", tmp.path().string(), "--axis", "bogus=1,2"});
  CHECK(r.code == exit_usage);
}

TEST_CASE("oracle subcommand") {
  TempDir tmp("cli-oracle");
  const fs::path single = tmp.path() / "single.json";
  std::ofstream(single) << json{{"instances",
                                 {{{"histograms", {{3, 1}, {0, 2}}}, {"capacities", {4.0, 5.0}}, {"ready", {1}},
                                   {"max_scheduled", 1}}}}}
                               .dump();
  auto r = cli({"oracle", "--instances", single.string(), "--out", (tmp.path() / "report.json").string()});
  CHECK(r.code == exit_ok);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(fs::exists(tmp.path() / "report.json"));

  json big = json::array();
  json hist = json::array(), caps = json::array();
  for (int k = 0; k < 30; ++k) {
    hist.push_back({k % 5 + 1, 1});
    caps.push_back(2.0 + k);
  }
  big.push_back({{"histograms", hist}, {"capacities", caps}, {"max_scheduled", 15}, {"prefilter_fraction", 1.0}});
  const fs::path large = tmp.path() / "large.json";
  std::ofstream(large) << json{{"instances", big}}.dump();
  r = cli({"oracle", "--instances", large.string()});
  CHECK(r.code == exit_usage);
  CHECK(r.out.find("refused") != std::string::npos);

  r = cli({"oracle", "--random", "20", "--seed", "3"});
  CHECK(r.code == exit_ok);
  r = cli({"oracle"});
  CHECK(r.code == exit_usage);
}

TEST_CASE("output root falls back to the environment") {
  TempDir tmp("cli-env");
  ::setenv("FEDASYNC_OUT", tmp.path().string().c_str(), 1);
  CHECK(output_root("") == tmp.path());
  CHECK(output_root("elsewhere") == fs::path("elsewhere"));
  const auto r = cli({"run", "--config", config_path("minimal.json")});
  CHECK(r.code == exit_ok);
  CHECK(last_line_path(r.out).parent_path() == tmp.path());
  ::unsetenv("FEDASYNC_OUT");
  CHECK(output_root("") == fs::path("runs"));
}
