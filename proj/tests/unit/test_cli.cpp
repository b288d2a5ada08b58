#include "cli.hpp"

#include "dosebound/common.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = dosebound::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / "dosebound_test_cli" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("parameter expressions") {
  using dosebound::cli::parse_param;
  CHECK(parse_param("log5") == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  CHECK(parse_param("log(25)") == doctest::Approx(std::log(25.0)).epsilon(1e-15));
  CHECK(parse_param("sqrt(2)") == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(parse_param(" 2.5 ") == 2.5);
  CHECK_THROWS_AS(parse_param("five"), dosebound::ConfigError);
  CHECK_THROWS_AS(parse_param("2.5x"), dosebound::ConfigError);
}

TEST_CASE("sensfn") {
  auto r = cli({"sensfn", "--family", "exp_abs_diff", "--params", "log5", "--eval", "0.2", "0.7"});
  CHECK(r.code == 0);
  CHECK(r.out == "2.2360680\n");
  r = cli({"sensfn", "--family", "exp_abs_diff", "--params", "log(25)", "--eval", "0", "1"});
  CHECK(r.out == "25.0000000\n");
  r = cli({"sensfn", "--family", "constant", "--params", "3", "--eval", "0.4", "0.4"});
  CHECK(r.out == "1.0000000\n");
  r = cli({"sensfn", "--family", "beta_odds", "--params", "2", "--grid", "3"});
  CHECK(r.code == 0);
  std::stringstream ss(r.out);
  std::string line;
  int lines = 0;
  while (std::getline(ss, line)) ++lines;
  CHECK(lines == 10);
  CHECK(cli({"sensfn", "--family", "exp_abs_diff", "--params", "1"}).code == 2);
  CHECK(cli({"sensfn", "--family", "nope", "--params", "1", "--eval", "0.1", "0.2"}).code == 2);
  CHECK(cli({"sensfn", "--family", "exp_log_ratio", "--params", "1", "--domain", "0,1", "--eval", "0.1", "0.2"}).code == 2);
  CHECK(cli({"sensfn", "--family", "exp_abs_diff", "--params", "1", "--eval", "0.1", "1.5"}).code == 2);
}

TEST_CASE("oracle-check") {
  auto r = cli({"oracle-check", "--instances", "200", "--seed", "3", "--lp-checks", "10"});
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(r.out.find("instances               200") != std::string::npos);
  CHECK(cli({"oracle-check", "--instances", "0"}).code == 2);
  CHECK(cli({"oracle-check", "--param-range", "0.5,2"}).code == 2);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"simulate", "--out", "x"}).code == 2);
  const auto dir = scratch("usage");
  write_text(dir / "c.json", "{}");
  CHECK(cli({"simulate", "--config", (dir / "c.json").string(), "--out", (dir / "o").string(), "--reps", "5"}).code == 2);
  CHECK(cli({"simulate", "--config", (dir / "c.json").string(), "--out", (dir / "o").string(), "--n", "50"}).code == 2);
  CHECK(cli({"simulate", "--config", (dir / "missing.json").string(), "--out", (dir / "o").string()}).code == 2);
  write_text(dir / "bad.json", "{ not json");
  CHECK(cli({"simulate", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()}).code == 2);
  CHECK(cli({"analyze", "--data", (dir / "none.csv").string(), "--config", (dir / "c.json").string(), "--out",
             (dir / "o").string()})
            .code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("simulate writes the outputs and reruns are byte-identical") {
  const auto dir = scratch("simulate");
  write_text(dir / "c.json", R"({"seed": 5, "quadrature_nodes": 16})");
  const std::vector<std::string> base{"simulate", "--config", (dir / "c.json").string(), "--reps", "10",
                                      "--n", "300", "--quiet"};
  auto a1 = base;
  a1.insert(a1.end(), {"--out", (dir / "o1").string(), "--dump-data", (dir / "dump").string(), "--gnuplot"});
  auto a2 = base;
  a2.insert(a2.end(), {"--out", (dir / "o2").string(), "--threads", "2"});
  const auto r1 = cli(a1);
  REQUIRE(r1.code == 0);
  CHECK(r1.out.find("NUC curve") != std::string::npos);
  CHECK(r1.err.empty());
  REQUIRE(cli(a2).code == 0);
  for (const char* f : {"report.json", "curves.csv", "summary.txt"}) CHECK(fs::exists(dir / "o1" / f));
  CHECK(fs::exists(dir / "o1" / "plot.gp"));
  CHECK(fs::exists(dir / "o1" / "summary_curves.csv"));
  CHECK(slurp(dir / "o1" / "curves.csv") == slurp(dir / "o2" / "curves.csv"));
  CHECK(slurp(dir / "o1" / "summary.txt") == slurp(dir / "o2" / "summary.txt"));
  const auto rows = read_csv(dir / "o1" / "curves.csv");
  CHECK(rows.size() == 10 * 9 * 3);

  SUBCASE("analyze on the dumped data reproduces replication 0") {
    const auto out = dir / "analysis";
    const auto r = cli({"analyze", "--data", (dir / "dump" / "data_rep0.csv").string(), "--config",
                        (dir / "dump" / "config_rep0.json").string(), "--out", out.string(), "--pseudo"});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("t,estimate,se,ci_lo,ci_hi\n", 0) == 0);
    CHECK(fs::exists(out / "curve.json"));
    CHECK(fs::exists(out / "pseudo.csv"));
    const auto curve = read_csv(out / "curve.csv");
    REQUIRE(curve.size() == 9);
    int k = 0;
    for (const auto& row : rows) {
      if (row[0] != "0" || row[2] != "nuc") continue;
      REQUIRE(k < 9);
      CHECK(std::abs(std::stod(row[1]) - std::stod(curve[static_cast<std::size_t>(k)][0])) < 1e-12);
      CHECK(std::abs(std::stod(row[3]) - std::stod(curve[static_cast<std::size_t>(k)][1])) <= 1e-10);
      CHECK(std::abs(std::stod(row[4]) - std::stod(curve[static_cast<std::size_t>(k)][2])) <= 1e-10);
      ++k;
    }
    CHECK(k == 9);
  }

  SUBCASE("analyze options") {
    const auto data = (dir / "dump" / "data_rep0.csv").string();
    const auto cfg = (dir / "dump" / "config_rep0.json").string();
    auto r = cli({"analyze", "--data", data, "--config", cfg, "--out", (dir / "a2").string(), "--model", "marginal",
                  "--side", "upper", "--grid", "0.25,0.5,0.75", "--nuisances", "builtin"});
    CHECK(r.code == 0);
    CHECK(read_csv(dir / "a2" / "curve.csv").size() == 3);
    CHECK(r.err.find("basis Gram condition") != std::string::npos);
    CHECK(cli({"analyze", "--data", data, "--config", cfg, "--out", (dir / "a3").string(), "--grid", "0.5,1.5"}).code == 2);
    CHECK(cli({"analyze", "--data", data, "--config", cfg, "--out", (dir / "a3").string(), "--nuisances", "magic"}).code == 2);
    CHECK(cli({"analyze", "--data", data, "--config", cfg, "--out", (dir / "a3").string(), "--model", "logistic"}).code == 2);
  }
}

TEST_CASE("the installed executable maps errors to exit codes") {
  const char* exe = std::getenv("DOSEBOUND_CLI");
  if (exe == nullptr) return;
  const auto dir = scratch("exe");
  const std::string quiet = " > " + (dir / "out.txt").string() + " 2> " + (dir / "err.txt").string();
  auto status = [&](const std::string& args) {
    const int s = std::system((std::string(exe) + " " + args + quiet).c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  CHECK(status("sensfn --family exp_abs_diff --params log5 --eval 0.2 0.7") == 0);
  CHECK(slurp(dir / "out.txt") == "2.2360680\n");
  CHECK(status("simulate --out " + (dir / "o").string()) == 2);
  CHECK(status("oracle-check --instances 0") == 2);
  CHECK(status("oracle-check --instances 50") == 0);
}
