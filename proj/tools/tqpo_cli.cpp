// Command-line front end: train, sweep, verify, emit-plotdata, export-oracle.

#include "tqpo/config.hpp"
#include "tqpo/oracle.hpp"
#include "tqpo/runner.hpp"
#include "tqpo/verify.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#ifndef TQPO_DATA_DIR
#define TQPO_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace tqpo;

namespace {

enum Exit { kOk = 0, kVerifyFailed = 1, kUsage = 2, kNumeric = 3 };

std::optional<std::string> env_var(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

int cmd_train(const std::string& config_path, std::string out, std::optional<std::uint64_t> seed,
              bool quiet) {
  RunConfig config = load_run_config(config_path);
  if (seed) config.seed = *seed;
  if (out.empty()) out = env_var("TQPO_OUT_DIR").value_or("runs");
  const fs::path out_dir = out;
  auto progress = [&](const EpochMetrics& m) {
    if (quiet) return;
    fmt::print("epoch {:4d}  return {:9.4f}  cost {:9.4f}  q {:9.4f}  safe {:.3f}  lambda {:.4g}\n",
               m.epoch, m.avg_return, m.avg_cost, m.cost_quantile, m.safety_probability, m.lambda);
  };
  const RunResult r = run_training(config, out_dir, progress);
  fmt::print("final (last {} epochs): return {:.4f}  safety {:.4f}  cost {:.4f}  quantile {:.4f}\n",
             r.summary.window, r.summary.final_return, r.summary.final_safety_probability,
             r.summary.final_avg_cost, r.summary.final_cost_quantile);
  fmt::print("wrote {}\n", out_dir.string());
  return kOk;
}

int cmd_sweep(const std::string& manifest_path, std::string out, int workers) {
  const ExperimentManifest manifest = load_manifest(manifest_path);
  const auto runs = manifest.expand();
  fs::path out_dir = manifest.output_dir;
  if (!out.empty()) out_dir = out;
  else if (auto v = env_var("TQPO_OUT_DIR")) out_dir = *v;
  if (workers <= 0) {
    workers = 1;
    if (auto v = env_var("TQPO_WORKERS")) workers = std::max(1, std::atoi(v->c_str()));
  }
  fs::create_directories(out_dir);

  std::vector<std::optional<SweepRecord>> records(runs.size());
  std::vector<std::string> failures(runs.size());
  std::vector<int> codes(runs.size(), kOk);
  std::atomic<std::size_t> next{0};
  std::mutex print_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      const auto& run = runs[i];
      try {
        const RunResult r = run_training(run.config, out_dir / run.name);
        records[i] = SweepRecord{to_string(run.config.algorithm_variant), env_label(run.config),
                                 run.config.epsilon, r.summary};
        std::lock_guard lock(print_mutex);
        fmt::print("[{}/{}] {} done\n", i + 1, runs.size(), run.name);
      } catch (const NumericError& e) {
        failures[i] = e.what();
        codes[i] = kNumeric;
      } catch (const std::exception& e) {
        failures[i] = e.what();
        codes[i] = kUsage;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(workers, static_cast<int>(runs.size()));
  for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::vector<SweepRecord> ok;
  int exit_code = kOk;
  std::string failure_log;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (records[i]) {
      ok.push_back(*records[i]);
    } else {
      failure_log += runs[i].name + ": " + failures[i] + "\n";
      exit_code = std::max(exit_code, codes[i]);
    }
  }
  write_text(out_dir / "aggregate.csv", aggregate_to_csv(aggregate(ok)));
  if (!failure_log.empty()) {
    write_text(out_dir / "failures.txt", failure_log);
    std::cerr << failure_log;
  }
  fmt::print("{} of {} runs succeeded; aggregate in {}\n", ok.size(), runs.size(),
             (out_dir / "aggregate.csv").string());
  return exit_code;
}

int cmd_verify(const std::string& scope, const fs::path& data_dir, const std::string& fixture) {
  auto checks = verify::run_scope(scope, data_dir);
  if (!fixture.empty()) {
    for (auto& c : checks) {
      if (c.id == "oracle.fixture") c = verify::fixture(fixture);
    }
    if (scope == "gradients" || scope == "schedules") checks.push_back(verify::fixture(fixture));
  }
  std::cout << verify::format_table(checks);
  const auto failed = std::count_if(checks.begin(), checks.end(), [](const auto& c) { return !c.passed; });
  fmt::print("{} checks, {} failed\n", checks.size(), failed);
  return failed == 0 ? kOk : kVerifyFailed;
}

int cmd_emit_plotdata(const fs::path& run_dir, std::string out) {
  if (!fs::is_directory(run_dir)) {
    std::cerr << "error: '" << run_dir.string() << "' is not a directory\n";
    return kUsage;
  }
  std::map<std::string, PlotSeries> groups;
  std::vector<fs::path> metric_files;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") {
      metric_files.push_back(entry.path());
    }
  }
  std::sort(metric_files.begin(), metric_files.end());
  for (const auto& path : metric_files) {
    const fs::path config_path = path.parent_path() / "config.ini";
    RunConfig config;
    if (fs::exists(config_path)) {
      const std::string text = [&] {
        std::ifstream in(config_path);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
      }();
      config = parse_run_config(text);
    }
    const std::string key = fmt::format("{}/{}/eps={}", to_string(config.algorithm_variant),
                                        env_label(config), format_double(config.epsilon));
    auto& g = groups[key];
    g.group = key;
    g.threshold_d = config.threshold_d;
    g.level = config.level();
    g.runs.push_back(read_metrics_csv(path));
  }
  if (groups.empty()) {
    std::cerr << "error: no metrics.csv under '" << run_dir.string() << "'\n";
    return kUsage;
  }
  const fs::path out_dir = out.empty() ? run_dir / "plotdata" : fs::path(out);
  fs::create_directories(out_dir);
  std::vector<PlotSeries> series;
  for (auto& [key, g] : groups) series.push_back(std::move(g));
  for (const auto& metric : plot_metric_names()) {
    write_text(out_dir / (metric + ".csv"), plot_to_csv(plot_bands(series, metric)));
  }
  fmt::print("{} groups from {} runs; plot data in {}\n", series.size(), metric_files.size(),
             out_dir.string());
  return kOk;
}

int cmd_export_oracle(const std::string& out, int horizon) {
  const ChainCostMDP env = ChainCostMDP::default_chain(horizon);
  write_text(out, oracle::fixture_to_json(oracle::build_fixture(env)));
  fmt::print("wrote {}\n", out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile-constrained policy optimization: training, sweeps and verification"};
  app.require_subcommand(1);
  app.footer(R"(Examples:
  tqpo train --config data/configs/chain_default.ini --out runs/chain
  tqpo train --config data/configs/skewed_acceptance.ini --seed-override 3
  tqpo sweep --manifest data/manifests/ablation.ini --workers 4
  tqpo verify --scope all
  tqpo emit-plotdata runs/ablation
  tqpo export-oracle --out data/fixtures/oracle_chain_default.json

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 numeric failure. TQPO_OUT_DIR and TQPO_WORKERS override the output
directory and worker count when the flags are absent.)");

  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train one run from a config file");
  train->add_option("--config", config_path, "Run configuration (INI)")->required();
  train->add_option("--out", out, "Output directory (default: $TQPO_OUT_DIR or ./runs)");
  auto* seed_opt = train->add_option("--seed-override", seed, "Replace the config's seed");
  train->add_flag("--quiet", quiet, "Only print the final summary");

  std::string manifest_path;
  int workers = 0;
  auto* sweep = app.add_subcommand("sweep", "Run every configuration of a sweep manifest");
  sweep->add_option("--manifest", manifest_path, "Sweep manifest (INI)")->required();
  sweep->add_option("--out", out, "Output directory (default: manifest out or $TQPO_OUT_DIR)");
  sweep->add_option("--workers", workers, "Parallel runs (default: $TQPO_WORKERS or 1)");

  std::string scope = "all";
  std::string data_dir = TQPO_DATA_DIR;
  std::string fixture;
  auto* verify_cmd = app.add_subcommand("verify", "Run oracle and invariant checks");
  verify_cmd->add_option("--scope", scope, "gradients, quantile, schedules or all")
      ->check(CLI::IsMember({"gradients", "quantile", "schedules", "all"}));
  verify_cmd->add_option("--data-dir", data_dir, "Directory holding configs/ and fixtures/");
  verify_cmd->add_option("--fixture", fixture, "Oracle fixture to check instead of the shipped one");

  std::string run_dir;
  auto* plot = app.add_subcommand("emit-plotdata", "Write mean/std bands per metric");
  plot->add_option("run_dir", run_dir, "Directory searched for metrics.csv files")->required();
  plot->add_option("--out", out, "Output directory (default: <run_dir>/plotdata)");

  int horizon = 6;
  auto* exporter = app.add_subcommand("export-oracle", "Write the exact-distribution fixture");
  exporter->add_option("--out", out, "Fixture path")->required();
  exporter->add_option("--horizon", horizon, "Chain horizon");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) {
      return cmd_train(config_path, out,
                       *seed_opt ? std::optional<std::uint64_t>(seed) : std::nullopt, quiet);
    }
    if (*sweep) return cmd_sweep(manifest_path, out, workers);
    if (*verify_cmd) return cmd_verify(scope, data_dir, fixture);
    if (*plot) return cmd_emit_plotdata(run_dir, out);
    if (*exporter) return cmd_export_oracle(out, horizon);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
