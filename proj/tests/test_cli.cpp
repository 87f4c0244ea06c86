#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bvm_cli.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace bvm;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bvm_uq_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

int run_cli(const std::string& command, const fs::path& config, const fs::path& out,
            std::optional<std::uint64_t> seed = std::nullopt, std::optional<int> threads = std::nullopt) {
  cli::Options o;
  o.command = command;
  o.config = config;
  o.out = out;
  o.seed = seed;
  o.threads = threads;
  return cli::run(o);
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(BVM_UQ_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_error(const std::string& text) {
  try {
    cli::parse_config(json::parse(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kSmallSample = R"({
  "problem": {"m": 16},
  "theta0": "zero",
  "psi": "bump",
  "prior": {"alpha": 4, "tau": 1000, "J": 4},
  "design": {"kind": "grid", "sqrt_n": 6},
  "sigma": 0.01,
  "chain": {"S": 400, "beta_pcn": 0.2},
  "base_seed": 3
})";

}  // namespace

TEST_CASE("config parsing and validation messages") {
  const cli::RunConfig rc = cli::parse_config(json::parse(kSmallSample));
  CHECK(rc.experiment.problem.grid.cells() == 16);
  CHECK(rc.experiment.prior.beta == 6.0);
  CHECK(rc.experiment.problem.k_min == 0.0);
  CHECK(rc.analytic_case);
  CHECK(rc.experiment.chain.beta_pcn == 0.2);

  CHECK(config_error(R"({"prior": {"alpha": 2}})") == "prior.alpha must exceed 1 + d = 3");
  CHECK(config_error(R"({"sigma": -1})") == "sigma must be > 0");
  CHECK(config_error(R"({"problem": {"m": 8}, "prior": {"J": 9}})") == "prior.J must not exceed the grid size m");
  CHECK(config_error(R"({"chain": {"S": 10, "burn_in": 10}})") == "chain.burn_in must be smaller than chain.S");
  CHECK(config_error(R"({"chain": {"step": 1}})").find("chain.step") != std::string::npos);
  CHECK(config_error(R"({"prior": {"tau": "big"}})") == "prior.tau must be a number or \"auto\"");
  CHECK(config_error(R"({"model": "exact"})") == "model must be \"pde\" or \"linearized\"");
  CHECK(config_error(R"({"theta0": {"modes": [[0, 1, 1.0]]}})").find("start at 1") != std::string::npos);
}

TEST_CASE("config hash is canonical") {
  const json a = json::parse(R"({"sigma": 5, "gamma": 0.05})");
  const json b = json::parse(R"({"gamma": 0.05,   "sigma": 5})");
  CHECK(cli::config_hash(a) == cli::config_hash(b));
  CHECK(cli::config_hash(a) != cli::config_hash(json::parse(R"({"sigma": 4})")));
  CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("malformed and missing configs exit with code 2") {
  const fs::path dir = scratch("bad");
  const fs::path cfg = write_config(dir, "{\"sigma\": 5,\n \"prior\": {\"alpha\": }\n}");
  CHECK(run_cli("sample", cfg, dir / "out") == cli::kExitConfig);
  CHECK_THROWS_WITH(cli::load_json(cfg), Catch::Matchers::ContainsSubstring("line 2"));
  CHECK(run_cli("sample", dir / "missing.json", dir / "out") == cli::kExitConfig);
  CHECK(run_cli("sample", write_config(dir, R"({"sigma": 0})"), dir / "out") == cli::kExitConfig);
  CHECK(run_binary("sample --config " + (dir / "missing.json").string() + " --out " + (dir / "o").string()) ==
        cli::kExitConfig);
  CHECK(run_binary("sample --out " + (dir / "o").string()) == cli::kExitConfig);
}

TEST_CASE("forward command on the benchmark") {
  const fs::path dir = scratch("forward");
  const fs::path cfg = write_config(dir, R"({"problem": {"m": 32}})");
  REQUIRE(run_cli("forward", cfg, dir / "out") == cli::kExitOk);
  const json rep = read_json(dir / "out" / "report.json");
  CHECK(rep["within_bound"].get<bool>());
  CHECK(rep["max_error"].get<double>() <= 2.0 / (32.0 * 32.0));
  const json man = read_json(dir / "out" / "manifest.json");
  CHECK(man["command"] == "forward");
  CHECK(man["outputs"] == json::array({"u.csv", "report.json"}));
  CHECK(man["config_hash"].get<std::string>().size() == 64);
}

TEST_CASE("sample command is deterministic in its outputs") {
  const fs::path dir = scratch("sample");
  const fs::path cfg = write_config(dir, kSmallSample);
  REQUIRE(run_cli("sample", cfg, dir / "a") == cli::kExitOk);
  REQUIRE(run_cli("sample", cfg, dir / "b", std::nullopt, 2) == cli::kExitOk);
  for (const char* f : {"dataset.csv", "trace.csv", "histogram.csv", "summary.json", "posterior_mean.csv"}) {
    CHECK(cli::sha256_hex(slurp(dir / "a" / f)) == cli::sha256_hex(slurp(dir / "b" / f)));
  }
  const json s = read_json(dir / "a" / "summary.json");
  CHECK(s["kept"].get<int>() == 320);
  CHECK(s["seed"].get<int>() == 3);
  CHECK(read_json(dir / "a" / "manifest.json")["config_hash"] == read_json(dir / "b" / "manifest.json")["config_hash"]);

  REQUIRE(run_cli("sample", cfg, dir / "c", 4) == cli::kExitOk);
  CHECK(slurp(dir / "a" / "dataset.csv") != slurp(dir / "c" / "dataset.csv"));
  CHECK(read_json(dir / "c" / "manifest.json")["base_seed"] == 4);
}

TEST_CASE("asymptotics command") {
  const fs::path dir = scratch("asym");
  const fs::path cfg = write_config(dir, R"({
    "problem": {"m": 32}, "psi": "bump",
    "prior": {"alpha": 11, "beta": 13, "tau": "auto", "J": 6}
  })");
  REQUIRE(run_cli("asymptotics", cfg, dir / "out") == cli::kExitOk);
  std::istringstream sweep(slurp(dir / "out" / "sweep.csv"));
  std::string line;
  std::getline(sweep, line);
  CHECK(line == "N,s_N,t_N,b_N,ratio,tau");
  int rows = 0;
  while (std::getline(sweep, line)) ++rows;
  CHECK(rows == 4);
  const json r = read_json(dir / "out" / "report_N1000.json");
  CHECK(r["tau_mode"] == "auto");
  CHECK(r["tau"].get<double>() == Catch::Approx(tau_star(1000, 11, 13, 2)));
  CHECK(r["t_N"].get<double>() < r["s_N"].get<double>());
  const json summary = read_json(dir / "out" / "sweep_summary.json");
  for (const auto& [k, v] : summary["conditions"].items()) CHECK(v.get<bool>());
}

TEST_CASE("coverage command smoke run") {
  const fs::path dir = scratch("coverage");
  json doc = json::parse(kSmallSample);
  doc["replicates"] = 4;
  doc["model"] = "linearized";
  const fs::path cfg = write_config(dir, doc.dump());
  REQUIRE(run_cli("coverage", cfg, dir / "out", std::nullopt, 2) == cli::kExitOk);
  const json rep = read_json(dir / "out" / "coverage_report.json");
  CHECK(rep["replicates"] == 4);
  CHECK(rep["per_replicate"].size() == 4);
  const double lo = rep["wilson_lo"].get<double>(), hi = rep["wilson_hi"].get<double>();
  CHECK(lo <= rep["empirical_coverage"].get<double>());
  CHECK(hi >= rep["empirical_coverage"].get<double>());
  std::istringstream csv(slurp(dir / "out" / "replicates.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 4 - rep["excluded"].get<int>());
}
