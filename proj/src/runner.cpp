#include "tqpo/runner.hpp"

#include "tqpo/config.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

namespace tqpo {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

std::string env_label(const RunConfig& config) {
  if (!config.env.preset.empty()) return config.env.preset;
  return std::filesystem::path(config.env.file).stem().string();
}

RunResult run_training(const RunConfig& config, const std::filesystem::path& out_dir,
                       const std::function<void(const EpochMetrics&)>& on_epoch) {
  require_valid(config);
  auto env = make_environment(config);
  TrainerState state = init_trainer(config, env->spec());

  std::ofstream csv;
  std::ofstream jsonl;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "config.ini", run_config_to_ini(config));
    csv.open(out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    jsonl.open(out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    if (!csv || !jsonl) throw ConfigError("cannot write metrics in '" + out_dir.string() + "'");
    csv << kMetricsHeader << '\n' << std::flush;
    if (config.checkpoint_every > 0) std::filesystem::create_directories(out_dir / "checkpoints");
  }

  RunResult result;
  result.metrics.reserve(static_cast<std::size_t>(config.epochs));
  for (int e = 0; e < config.epochs; ++e) {
    EpochResult step = train_epoch(std::move(state), *env, config);
    state = std::move(step.state);
    result.metrics.push_back(step.metrics);
    if (csv.is_open()) {
      csv << metrics_csv_row(step.metrics) << '\n' << std::flush;
      jsonl << metrics_json_line(step.metrics) << '\n' << std::flush;
      if (config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0) {
        save_checkpoint(out_dir / "checkpoints" / fmt::format("epoch_{:05d}.ckpt", state.epoch),
                        state);
      }
    }
    if (on_epoch) on_epoch(step.metrics);
  }
  result.summary = summarize(result.metrics);
  result.final_state = std::move(state);
  if (!out_dir.empty()) write_text(out_dir / "summary.json", summary_to_json(result.summary, config));
  return result;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

std::vector<AggregateRow> aggregate(const std::vector<SweepRecord>& records) {
  using Key = std::tuple<std::string, std::string, double>;
  std::map<Key, std::vector<RunSummary>> groups;
  for (const auto& r : records) groups[{r.variant, r.env, r.epsilon}].push_back(r.summary);

  std::vector<AggregateRow> rows;
  for (auto& [key, summaries] : groups) {
    // Sorting makes the floating-point sums independent of input order.
    auto collect = [&summaries](double RunSummary::*field) {
      std::vector<double> xs;
      for (const auto& s : summaries) xs.push_back(s.*field);
      std::sort(xs.begin(), xs.end());
      return mean_std(xs);
    };
    AggregateRow row;
    std::tie(row.variant, row.env, row.epsilon) = key;
    row.n_runs = static_cast<int>(summaries.size());
    std::tie(row.return_mean, row.return_std) = collect(&RunSummary::final_return);
    std::tie(row.safety_mean, row.safety_std) = collect(&RunSummary::final_safety_probability);
    std::tie(row.cost_mean, row.cost_std) = collect(&RunSummary::final_avg_cost);
    std::tie(row.quantile_mean, row.quantile_std) = collect(&RunSummary::final_cost_quantile);
    rows.push_back(row);
  }
  return rows;
}

namespace {
constexpr const char* kAggregateHeader =
    "variant,env,epsilon,n_runs,return_mean,return_std,safety_mean,safety_std,cost_mean,cost_std,"
    "quantile_mean,quantile_std";
}

std::string aggregate_to_csv(const std::vector<AggregateRow>& rows) {
  std::string out = std::string(kAggregateHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", r.variant, r.env,
                       format_double(r.epsilon), r.n_runs, format_double(r.return_mean),
                       format_double(r.return_std), format_double(r.safety_mean),
                       format_double(r.safety_std), format_double(r.cost_mean),
                       format_double(r.cost_std), format_double(r.quantile_mean),
                       format_double(r.quantile_std));
  }
  return out;
}

std::vector<AggregateRow> parse_aggregate_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kAggregateHeader) {
    throw ConfigError("aggregate file has an unexpected header");
  }
  std::vector<AggregateRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 12) throw ConfigError("aggregate row has the wrong number of fields");
    auto num = [](const std::string& s) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (used == 0 || used != s.size()) throw ConfigError("aggregate field '" + s + "' is not a number");
      return v;
    };
    AggregateRow r;
    r.variant = f[0];
    r.env = f[1];
    r.epsilon = num(f[2]);
    r.n_runs = static_cast<int>(num(f[3]));
    r.return_mean = num(f[4]);
    r.return_std = num(f[5]);
    r.safety_mean = num(f[6]);
    r.safety_std = num(f[7]);
    r.cost_mean = num(f[8]);
    r.cost_std = num(f[9]);
    r.quantile_mean = num(f[10]);
    r.quantile_std = num(f[11]);
    rows.push_back(r);
  }
  return rows;
}

const std::vector<std::string>& plot_metric_names() {
  static const std::vector<std::string> names{"avg_return", "avg_cost",  "cost_quantile",
                                              "safety_probability", "lambda", "q_tracker",
                                              "eta_used", "F_q_at_d"};
  return names;
}

namespace {

double metric_value(const EpochMetrics& m, const std::string& name) {
  if (name == "avg_return") return m.avg_return;
  if (name == "avg_cost") return m.avg_cost;
  if (name == "cost_quantile") return m.cost_quantile;
  if (name == "safety_probability") return m.safety_probability;
  if (name == "lambda") return m.lambda;
  if (name == "q_tracker") return m.q_tracker;
  if (name == "eta_used") return m.eta_used;
  if (name == "F_q_at_d") return m.F_q_at_d;
  throw std::invalid_argument("unknown metric '" + name + "'");
}

constexpr const char* kPlotHeader = "group,epoch,mean,std,n_runs,threshold_d,level";

}  // namespace

std::vector<PlotRow> plot_bands(const std::vector<PlotSeries>& series, const std::string& metric) {
  std::vector<PlotRow> rows;
  for (const auto& s : series) {
    std::map<int, std::vector<double>> by_epoch;
    for (const auto& run : s.runs) {
      for (const auto& m : run) by_epoch[m.epoch].push_back(metric_value(m, metric));
    }
    for (auto& [epoch, xs] : by_epoch) {
      std::sort(xs.begin(), xs.end());
      const auto [mean, sd] = mean_std(xs);
      rows.push_back({s.group, epoch, mean, sd, static_cast<int>(xs.size()), s.threshold_d, s.level});
    }
  }
  return rows;
}

std::string plot_to_csv(const std::vector<PlotRow>& rows) {
  std::string out = std::string(kPlotHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.group, r.epoch, format_double(r.mean),
                       format_double(r.std), r.n_runs, format_double(r.threshold_d),
                       format_double(r.level));
  }
  return out;
}

std::vector<PlotRow> parse_plot_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kPlotHeader) {
    throw ConfigError("plot file has an unexpected header");
  }
  std::vector<PlotRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 7) throw ConfigError("plot row has the wrong number of fields");
    try {
      rows.push_back({f[0], std::stoi(f[1]), std::stod(f[2]), std::stod(f[3]), std::stoi(f[4]),
                      std::stod(f[5]), std::stod(f[6])});
    } catch (const std::logic_error&) {
      throw ConfigError("plot row '" + line + "' is malformed");
    }
  }
  return rows;
}

}  // namespace tqpo
