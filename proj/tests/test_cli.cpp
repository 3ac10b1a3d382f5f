#include <doctest.h>

#include "tqpo/runner.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace tqpo;
namespace fs = std::filesystem;

namespace {

const std::string kCli = TQPO_CLI;
const std::string kData = TQPO_DATA_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tqpo_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Runs the CLI with stdout and stderr captured to `log`; returns the exit code.
int run(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string small_config(const fs::path& dir) {
  std::string text = slurp(kData + "/configs/skewed_acceptance.ini");
  text.replace(text.find("epochs = 400"), 12, "epochs = 5");
  text.replace(text.find("../envs/"), 8, kData + "/envs/");
  const fs::path p = dir / "small.ini";
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST_CASE("train is byte-for-byte reproducible") {
  const fs::path dir = scratch("train");
  const std::string cfg = small_config(dir);
  REQUIRE(run("train --quiet --config " + cfg + " --out " + (dir / "a").string(), dir / "a.log") == 0);
  REQUIRE(run("train --quiet --config " + cfg + " --out " + (dir / "b").string(), dir / "b.log") == 0);
  CHECK(slurp(dir / "a/metrics.csv") == slurp(dir / "b/metrics.csv"));
  CHECK(slurp(dir / "a/metrics.jsonl") == slurp(dir / "b/metrics.jsonl"));
  CHECK(slurp(dir / "a/summary.json") == slurp(dir / "b/summary.json"));

  REQUIRE(run("train --quiet --config " + cfg + " --seed-override 9 --out " + (dir / "c").string(),
              dir / "c.log") == 0);
  CHECK(slurp(dir / "a/metrics.csv") != slurp(dir / "c/metrics.csv"));
  fs::remove_all(dir);
}

TEST_CASE("usage and config errors exit with 2") {
  const fs::path dir = scratch("errors");
  CHECK(run("train --config /nonexistent.ini --out " + dir.string(), dir / "log") == 2);
  CHECK(slurp(dir / "log").find("nonexistent") != std::string::npos);
  CHECK(run("", dir / "log") == 2);
  CHECK(run("train", dir / "log") == 2);
  CHECK(run("verify --scope everything", dir / "log") == 2);
  std::ofstream(dir / "bad.ini") << "[run]\nepsilon = 2\n";
  CHECK(run("train --config " + (dir / "bad.ini").string(), dir / "log") == 2);
  fs::remove_all(dir);
}

TEST_CASE("verify reports a corrupted fixture") {
  const fs::path dir = scratch("verify");
  std::string text = slurp(kData + "/fixtures/oracle_chain_default.json");
  const auto pos = text.find("\"quantiles\"");
  REQUIRE(pos != std::string::npos);
  // Bump the leading digit of the first recorded quantile value.
  const auto comma = text.find(',', text.find('[', text.find('[', pos) + 1));
  const auto digit = text.find_first_of("0123456789", comma);
  text[digit] = text[digit] == '9' ? '8' : static_cast<char>(text[digit] + 1);
  std::ofstream(dir / "bad.json") << text;

  CHECK(run("verify --scope schedules --data-dir " + kData + " --fixture " + (dir / "bad.json").string(),
            dir / "log") == 1);
  const std::string log = slurp(dir / "log");
  CHECK(log.find("FAIL") != std::string::npos);
  CHECK(log.find("oracle.fixture") != std::string::npos);

  CHECK(run("verify --scope schedules --data-dir " + kData, dir / "log") == 0);
  fs::remove_all(dir);
}

TEST_CASE("emit-plotdata") {
  const fs::path dir = scratch("plot");
  const std::string cfg = small_config(dir);
  REQUIRE(run("train --quiet --config " + cfg + " --out " + (dir / "runs/one").string(), dir / "log") == 0);
  REQUIRE(run("emit-plotdata " + (dir / "runs").string(), dir / "log") == 0);
  for (const auto& metric : plot_metric_names()) {
    CAPTURE(metric);
    const fs::path f = dir / "runs/plotdata" / (metric + ".csv");
    REQUIRE(fs::exists(f));
    const auto rows = parse_plot_csv(slurp(f));
    CHECK(rows.size() == 5);
    for (const auto& r : rows) {
      CHECK(r.std == 0.0);
      CHECK(r.n_runs == 1);
      CHECK(r.threshold_d == 15.0);
      CHECK(r.level == doctest::Approx(0.9));
    }
  }
  fs::create_directories(dir / "empty");
  CHECK(run("emit-plotdata " + (dir / "empty").string(), dir / "log") == 2);
  CHECK(run("emit-plotdata " + (dir / "missing").string(), dir / "log") == 2);
  fs::remove_all(dir);
}

TEST_CASE("sweep writes one run per configuration and an aggregate") {
  const fs::path dir = scratch("sweep");
  const std::string cfg = small_config(dir);
  std::ofstream(dir / "m.ini") << "[manifest]\nbase_config = " << cfg
                               << "\nout = out\n[sweep]\nvariant = TQPO PPO_LAG\nseed = 1 2\n";
  CHECK(run("sweep --manifest " + (dir / "m.ini").string() + " --workers 2", dir / "log") == 0);
  int runs = 0;
  for (const auto& e : fs::directory_iterator(dir / "out")) runs += fs::exists(e.path() / "summary.json");
  CHECK(runs == 4);
  const auto rows = parse_aggregate_csv(slurp(dir / "out/aggregate.csv"));
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) CHECK(r.n_runs == 2);
  fs::remove_all(dir);
}

TEST_CASE("export-oracle reproduces the shipped fixture") {
  const fs::path dir = scratch("oracle");
  REQUIRE(run("export-oracle --out " + (dir / "f.json").string(), dir / "log") == 0);
  CHECK(slurp(dir / "f.json") == slurp(kData + "/fixtures/oracle_chain_default.json"));
  fs::remove_all(dir);
}
