#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "brw/cli.hpp"
#include "brw/rng.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path test_dir() {
  const fs::path dir = fs::temp_directory_path() / "brw_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json manifest_of(const fs::path& out) { return json::parse(slurp(out.string() + ".manifest")); }

// Value column of the first CSV row whose first field equals key.
double csv_value(const std::string& csv, const std::string& key) {
  std::istringstream lines(csv);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind(key + ",", 0) == 0) {
      const auto a = line.find(',');
      const auto b = line.find(',', a + 1);
      return std::stod(line.substr(a + 1, b - a - 1));
    }
  }
  FAIL("row not found: " << key);
  return 0.0;
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char ch : text)
    if (ch == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("laws check writes residual rows and a digest-carrying manifest") {
  const fs::path out = test_dir() / "laws_gauss.csv";
  const int rc = brw::cli::run({"laws", "check", "--law", "gaussian-binary", "--out",
                                out.string()});
  REQUIRE(rc == 0);
  const std::string csv = slurp(out);
  CHECK(csv.rfind("x,value,se\n", 0) == 0);
  CHECK(std::abs(csv_value(csv, "w1_residual_closed")) < 1e-9);
  CHECK(std::abs(csv_value(csv, "vw_residual_closed")) < 1e-9);
  CHECK(std::abs(csv_value(csv, "w1_residual_quadrature")) < 1e-9);
  CHECK(csv_value(csv, "sigma2_closed") == doctest::Approx(1.3862943611198906));
  CHECK(csv_value(csv, "lambda_star") == doctest::Approx(2.737886794424557));
  CHECK(csv_value(csv, "extinction_probability") == 0.0);

  const json m = manifest_of(out);
  CHECK(m.at("subcommand") == "laws check");
  CHECK(m.at("version") == "1.0.0");
  CHECK(m.at("seed") == 0);
  CHECK(m.at("budget_exhausted") == false);
  CHECK(m.at("runtime_seconds").get<double>() >= 0.0);
  const std::string digest = m.at("outputs").at(out.string());
  char expect[32];
  std::snprintf(expect, sizeof(expect), "fnv1a64:%016llx",
                static_cast<unsigned long long>(brw::fnv1a64(csv)));
  CHECK(digest == expect);
  CHECK(m.at("result").at("sigma2").get<double>() == doctest::Approx(1.3862943611198906));
}

TEST_CASE("laws accept names, inline JSON and config files interchangeably") {
  const fs::path dir = test_dir();
  const fs::path by_name = dir / "law_name.csv";
  const fs::path by_json = dir / "law_json.csv";
  const fs::path by_file = dir / "law_file.csv";
  const fs::path cfg = dir / "law_cfg.json";
  {
    std::ofstream f(cfg);
    f << "{\"family\": \"lattice-binary\"}\n";
  }
  REQUIRE(brw::cli::run({"laws", "check", "--law", "lattice-binary", "--out",
                         by_name.string()}) == 0);
  REQUIRE(brw::cli::run({"laws", "check", "--law", "{\"family\": \"lattice-binary\"}", "--out",
                         by_json.string()}) == 0);
  REQUIRE(brw::cli::run({"laws", "check", "--law", cfg.string(), "--out", by_file.string()}) ==
          0);
  const std::string a = slurp(by_name);
  CHECK(a == slurp(by_json));
  CHECK(a == slurp(by_file));
}

TEST_CASE("the documented corridor example produces the exact quarter") {
  const fs::path out = test_dir() / "corridor_quarter.csv";
  const int rc = brw::cli::run({"corridor", "dp", "--band", "const:-1:1", "--walk", "pm1",
                                "--n", "4", "--out", out.string()});
  REQUIRE(rc == 0);
  const std::string csv = slurp(out);
  CHECK(csv.find("0.25") != std::string::npos);
  CHECK(csv.rfind("n,a_n,p,log_p,scaled_log_p\n", 0) == 0);
  const json m = manifest_of(out);
  CHECK(m.at("result").at("estimate").get<double>() == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(m.at("result").at("exact") == true);
}

TEST_CASE("unknown flags abort with exit 2 and write nothing") {
  const fs::path out = test_dir() / "never_written.csv";
  fs::remove(out);
  fs::remove(out.string() + ".manifest");
  const int rc = brw::cli::run({"simulate", "cmd", "--law", "lattice-binary", "--n", "4",
                                "--cap", "2.0", "--replicates", "10", "--bogus-flag", "7",
                                "--out", out.string()});
  CHECK(rc == 2);
  CHECK_FALSE(fs::exists(out));
  CHECK_FALSE(fs::exists(out.string() + ".manifest"));
}

TEST_CASE("config errors abort with exit 2 and write nothing") {
  const fs::path out = test_dir() / "never_written2.csv";
  fs::remove(out);
  CHECK(brw::cli::run({"laws", "check", "--law", "no-such-law", "--out", out.string()}) == 2);
  CHECK_FALSE(fs::exists(out));
  CHECK(brw::cli::run({"corridor", "dp", "--band", "const:-1:1", "--walk", "pm1"}) == 2);
  CHECK(brw::cli::run({"laws"}) == 2);           // missing subcommand
  CHECK(brw::cli::run({"--version"}) == 0);      // version is a clean exit
  CHECK(brw::cli::run({"corridor", "dp", "--band", "const:1:-1", "--walk", "pm1", "--n",
                       "4"}) == 2);              // inverted band fails validation
}

TEST_CASE("simulate cmd emits one row per replicate, identically for any thread count") {
  const fs::path dir = test_dir();
  const fs::path t1 = dir / "cmd_t1.csv";
  const fs::path t4 = dir / "cmd_t4.csv";
  const std::vector<std::string> base = {"simulate",     "cmd",  "--law", "lattice-binary",
                                         "--n",          "8",    "--cap", "3.0",
                                         "--replicates", "500",  "--seed", "5"};
  auto with = [&](const fs::path& out, const char* threads) {
    std::vector<std::string> args = base;
    args.insert(args.end(), {"--threads", threads, "--out", out.string()});
    return brw::cli::run(args);
  };
  REQUIRE(with(t1, "1") == 0);
  REQUIRE(with(t4, "4") == 0);
  const std::string csv1 = slurp(t1);
  CHECK(csv1 == slurp(t4));
  CHECK(csv1.rfind("replicate,L_n,censored,extinct,nodes_expanded\n", 0) == 0);
  CHECK(line_count(csv1) == 501);  // header + one row per replicate
  CHECK(manifest_of(t1).at("outputs").at(t1.string()) ==
        manifest_of(t4).at("outputs").at(t4.string()));
}

TEST_CASE("an unreachable direct cap exits with the budget code and a flagged manifest") {
  const fs::path out = test_dir() / "tail_budget.csv";
  const int rc = brw::cli::run({"tail", "curve", "--law", "lattice-binary", "--n", "1000",
                                "--lambdas", "2.0", "--mode", "direct", "--replicates", "10",
                                "--out", out.string()});
  CHECK(rc == 3);
  const json m = manifest_of(out);
  CHECK(m.at("budget_exhausted") == true);
  CHECK(m.at("budget_note").get<std::string>().find("lambda * n^{1/3}") != std::string::npos);
}

TEST_CASE("population-mean summaries expose both exponent targets") {
  const fs::path out = test_dir() / "zmean.csv";
  const int rc = brw::cli::run({"spine", "zmean", "--law", "lattice-binary", "--lambda", "2.0",
                                "--delta", "0.05", "--n", "1000", "--method", "dp", "--out",
                                out.string()});
  REQUIRE(rc == 0);
  const std::string csv = slurp(out);
  CHECK(csv.rfind("quantity,estimate,se,log_over_n13,target_exponent\n", 0) == 0);
  CHECK(csv.find("population_mean,") != std::string::npos);
  CHECK(csv.find("population_bound,") != std::string::npos);
  const json m = manifest_of(out);
  // Floored-bound limit: lambda - lambda_star (1 + delta)^{1/3}.
  CHECK(m.at("result").at("target_exponent").get<double>() ==
        doctest::Approx(2.0 - 2.950155641582904 * std::cbrt(1.05)).epsilon(1e-12));
  CHECK(m.at("result").contains("log_over_n13"));
}

TEST_CASE("corridor fit reports both the extrapolation and the quadrature limit") {
  const fs::path out = test_dir() / "fit.csv";
  const int rc = brw::cli::run({"corridor", "fit", "--band", "const:-1:1", "--walk", "pm1",
                                "--n-grid", "100,200,400,800", "--out", out.string()});
  REQUIRE(rc == 0);
  const std::string csv = slurp(out);
  CHECK(csv.rfind("n,a_n,log_p,scaled_log_p\n", 0) == 0);
  CHECK(line_count(csv) == 5);
  const json m = manifest_of(out);
  CHECK(m.at("result").at("mogulskii_exponent").get<double>() ==
        doctest::Approx(-9.8696044010893586 / 8.0).epsilon(1e-10));
  CHECK(std::isfinite(m.at("result").at("fitted_limit").get<double>()));
  CHECK(m.at("result").at("diverging") == false);
}

TEST_CASE("tail contrast rows carry both sides of the comparison") {
  const fs::path out = test_dir() / "contrast.csv";
  const int rc = brw::cli::run({"tail", "contrast", "--nice", "gaussian-binary", "--heavy",
                                "heavy-mixture", "--n-grid", "27,64", "--replicates", "300",
                                "--seed", "3", "--out", out.string()});
  REQUIRE(rc == 0);
  const std::string csv = slurp(out);
  CHECK(csv.rfind("side,n,a_n,log_p_plain,log_p_constrained,deficit_scaled,hits_plain,"
                  "hits_constrained\n",
                  0) == 0);
  CHECK(csv.find("nice,27,") != std::string::npos);
  CHECK(csv.find("heavy,64,") != std::string::npos);
  const json m = manifest_of(out);
  CHECK(m.at("result").at("nice_deficit_fit").get<double>() == 0.0);
  CHECK(m.at("result").contains("heavy_deficit_fit"));
}

TEST_CASE("corridor Monte Carlo reruns are byte-identical across thread counts") {
  const fs::path dir = test_dir();
  const fs::path a = dir / "mc_a.csv";
  const fs::path b = dir / "mc_b.csv";
  auto run_mc = [&](const fs::path& out, const char* threads) {
    return brw::cli::run({"corridor", "mc", "--band", "const:-1.5:1.5", "--walk", "acosh2",
                          "--n", "16", "--replicates", "4000", "--seed", "9", "--threads",
                          threads, "--out", out.string()});
  };
  REQUIRE(run_mc(a, "1") == 0);
  REQUIRE(run_mc(b, "3") == 0);
  CHECK(slurp(a) == slurp(b));
}
